#include "smoothconv/suite.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "smoothconv/config.hpp"

namespace smoothconv {

namespace fs = std::filesystem;

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kCompleteMarker = "COMPLETE";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double x) { return fmt::format("{:.17g}", x); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(t));
}

ojson json_number(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

ojson report_json(const EstimateReport& r) {
  ojson j;
  j["experiment"] = r.experiment;
  j["config"] = r.config;
  j["group"] = r.group;
  j["role"] = r.role;
  j["seed"] = r.seed;
  j["q"] = r.q;
  j["p"] = r.p;
  j["T"] = r.T;
  j["passed"] = r.passed();
  j["wall_seconds"] = r.wall_seconds;
  ojson checks = ojson::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = checks;
  ojson fits = ojson::object();
  for (const auto& s : r.stats) {
    if (s.param) continue;
    if (s.name == "c_hat" || s.name == "c_fit" || s.name == "C" || s.name == "C_prime" || s.name == "c2_hat" ||
        s.name == "c_fit_T_ratio") {
      fits[s.name] = json_number(s.value);
    }
  }
  if (r.experiment == "maximal") {
    for (const auto& s : r.stats) {
      if (s.name == "c_hat" && s.param) fits[fmt::format("c_hat@T={}", *s.param)] = json_number(s.value);
    }
  }
  j["fits"] = fits;
  return j;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RunDirectoryError(fmt::format("{}: cannot open", path.string()));
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  char c;
  bool any = false;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string param_label(const std::string& experiment, const std::string& statistic) {
  if (experiment == "maximal") return "T";
  if (experiment == "maximal_fit") return "T";
  if (experiment == "burkholder" || experiment == "ito_convergence") return "mesh_exponent";
  if (experiment == "remainder_bound" || experiment == "remainder_fit") return "epsilon";
  if (experiment == "yosida") return "m";
  if (experiment == "lenglart") {
    if (statistic == "hypothesis_gap_time") return "t";
    if (statistic == "hypothesis_gap_level" || statistic == "level") return "quantile";
    return "r";
  }
  return "param";
}

}  // namespace

void write_results_csv(const std::vector<EstimateReport>& reports, std::ostream& out) {
  out << "experiment,config,group,role,q,p,T,seed,statistic,param,value,se\n";
  for (const auto& r : reports) {
    for (const auto& s : r.stats) {
      out << csv_field(r.experiment) << ',' << csv_field(r.config) << ',' << csv_field(r.group) << ','
          << csv_field(r.role) << ',' << num(r.q) << ',' << num(r.p) << ',' << num(r.T) << ',' << r.seed << ','
          << csv_field(s.name) << ',' << (s.param ? num(*s.param) : std::string()) << ',' << num(s.value) << ','
          << num(s.se) << '\n';
    }
  }
}

int run_suite(const RunManifest& manifest, std::ostream& log) {
  if (manifest.selectors && manifest.selectors->empty()) {
    log << "empty selector: nothing to run\n";
    return 0;
  }
  std::set<ExperimentKind> selected;
  if (manifest.selectors) {
    for (const auto& s : *manifest.selectors) {
      const auto k = experiment_from_string(s);
      if (!k) throw ConfigError(fmt::format("unknown experiment selector \"{}\"", s));
      selected.insert(*k);
    }
  } else {
    selected.insert(all_experiments().begin(), all_experiments().end());
  }
  if (manifest.out_dir.empty()) throw RunDirectoryError("no output directory given");
  if (manifest.config_paths.empty()) throw ConfigError("no config files given");

  std::vector<ExperimentConfig> configs;
  for (const auto& path : manifest.config_paths) {
    for (auto& c : parse_config(path, manifest.master_seed)) {
      if (selected.count(c.kind)) configs.push_back(std::move(c));
    }
  }

  const fs::path out(manifest.out_dir);
  if (fs::exists(out)) {
    if (fs::exists(out / kCompleteMarker) && !manifest.force) {
      throw RunDirectoryError(
          fmt::format("{} holds a completed run; pass --force to overwrite it", out.string()));
    }
  }
  fs::path tmp = out;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  const std::string started = utc_now();
  const LabOptions opts{manifest.workers};
  std::vector<EstimateReport> reports;
  ojson errors = ojson::array();
  std::map<std::string, std::vector<MaximalSample>> maximal_cache;
  std::map<std::string, RemainderSample> remainder_cache;
  std::map<std::pair<std::string, double>, std::vector<MaximalMember>> maximal_groups;
  std::map<std::pair<std::string, double>, std::vector<RemainderMember>> remainder_groups;

  for (const auto& cfg : configs) {
    log << fmt::format("[{}] {} ...", to_string(cfg.kind), cfg.name) << std::flush;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      EstimateReport r;
      if (cfg.kind == ExperimentKind::maximal) {
        auto it = maximal_cache.find(cfg.base_name);
        if (it == maximal_cache.end()) it = maximal_cache.emplace(cfg.base_name, simulate_maximal(cfg, opts)).first;
        r = maximal_report(cfg, it->second);
        if (!cfg.group.empty()) maximal_groups[{cfg.group, cfg.p}].push_back({&cfg, &it->second});
      } else if (cfg.kind == ExperimentKind::remainder_bound && !cfg.group.empty()) {
        auto it = remainder_cache.find(cfg.name);
        if (it == remainder_cache.end()) it = remainder_cache.emplace(cfg.name, simulate_remainder(cfg, opts)).first;
        r = remainder_report(cfg, it->second);
        remainder_groups[{cfg.group, cfg.p}].push_back({&cfg, &it->second});
      } else {
        r = run_experiment(cfg, opts);
      }
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (cfg.dump_paths > 0) {
        fs::create_directories(tmp / "paths");
        const auto paths = sample_paths(cfg, cfg.dump_paths);
        for (std::size_t k = 0; k < paths.size(); ++k) {
          std::ofstream f(tmp / "paths" / fmt::format("{}_traj{}.csv", cfg.name, k));
          write_path_csv(paths[k], f);
        }
      }
      log << fmt::format(" {} ({:.1f}s)\n", r.passed() ? "pass" : "FAIL", r.wall_seconds);
      reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      log << " ERROR: " << e.what() << "\n";
      errors.push_back({{"experiment", to_string(cfg.kind)}, {"config", cfg.name}, {"error", e.what()}});
    }
  }
  for (const auto& [key, members] : maximal_groups) {
    try {
      reports.push_back(fit_maximal_group(key.first, key.second, members));
      log << fmt::format("[maximal_fit] {} p={} {}\n", key.first, key.second,
                         reports.back().passed() ? "pass" : "FAIL");
    } catch (const std::exception& e) {
      errors.push_back({{"experiment", "maximal_fit"}, {"config", key.first}, {"error", e.what()}});
    }
  }
  for (const auto& [key, members] : remainder_groups) {
    try {
      reports.push_back(fit_remainder_group(key.first, key.second, members));
      log << fmt::format("[remainder_fit] {} p={} {}\n", key.first, key.second,
                         reports.back().passed() ? "pass" : "FAIL");
    } catch (const std::exception& e) {
      errors.push_back({{"experiment", "remainder_fit"}, {"config", key.first}, {"error", e.what()}});
    }
  }

  {
    std::ofstream f(tmp / "results.csv", std::ios::binary);
    write_results_csv(reports, f);
  }
  bool all_passed = errors.empty();
  ojson experiments = ojson::array();
  for (const auto& r : reports) {
    all_passed = all_passed && r.passed();
    experiments.push_back(report_json(r));
  }
  const bool complete = errors.empty();
  {
    ojson summary;
    summary["complete"] = complete;
    summary["all_passed"] = all_passed;
    summary["started_at"] = started;
    summary["finished_at"] = utc_now();
    summary["experiments"] = experiments;
    summary["errors"] = errors;
    std::ofstream f(tmp / "summary.json");
    f << summary.dump(2) << "\n";
  }
  {
    ojson m;
    m["config_paths"] = manifest.config_paths;
    m["master_seed"] = manifest.master_seed;
    m["workers"] = manifest.workers;
    m["out_dir"] = manifest.out_dir;
    m["selectors"] = manifest.selectors ? ojson(*manifest.selectors) : ojson(nullptr);
    m["force"] = manifest.force;
    ojson seeds = ojson::object();
    for (const auto& c : configs) seeds[c.name] = c.seed;
    m["resolved_seeds"] = seeds;
    std::ofstream f(tmp / "manifest.json");
    f << m.dump(2) << "\n";
  }
  if (complete) std::ofstream(tmp / kCompleteMarker) << "ok\n";
  fs::remove_all(out);
  fs::rename(tmp, out);
  log << fmt::format("{} reports, {} errors, {}\n", reports.size(), errors.size(), all_passed ? "all checks pass" : "FAILURES");
  return all_passed ? 0 : 1;
}

std::vector<std::string> emit_plotdata(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::exists(dir / kCompleteMarker) || !fs::exists(dir / "results.csv")) {
    throw RunDirectoryError(fmt::format("{} is not a completed run", run_dir));
  }
  const auto rows = read_csv(dir / "results.csv");
  if (rows.empty()) throw RunDirectoryError(fmt::format("{}/results.csv is empty", run_dir));
  std::map<std::string, std::vector<const std::vector<std::string>*>> by_experiment;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 12) throw RunDirectoryError(fmt::format("results.csv row {} is malformed", i + 1));
    if (rows[i][9].empty()) continue;
    by_experiment[rows[i][0]].push_back(&rows[i]);
  }
  fs::create_directories(dir / "plot");
  std::vector<std::string> written;
  for (const auto& [experiment, list] : by_experiment) {
    const fs::path file = dir / "plot" / (experiment + ".csv");
    std::ofstream f(file, std::ios::binary);
    f << "config,statistic,param_name,param,value,se\n";
    for (const auto* r : list) {
      const auto& row = *r;
      f << csv_field(row[1]) << ',' << csv_field(row[8]) << ',' << param_label(experiment, row[8]) << ',' << row[9]
        << ',' << row[10] << ',' << row[11] << '\n';
    }
    written.push_back(file.string());
  }
  return written;
}

std::vector<ConstantRow> constants_table(const std::vector<double>& qs, const std::vector<double>& ps,
                                         std::size_t dim, std::size_t samples, std::uint64_t seed) {
  std::vector<ConstantRow> rows;
  for (double q : qs) {
    const QSpace space(dim, q);
    const auto k = estimate_smoothness_constant(space, seed, samples);
    for (double p : ps) {
      const auto c = fit_two_term_constant(space, p, seed, samples);
      rows.push_back({q, p, k.K_hat, c.C_hat, seed, samples});
    }
  }
  return rows;
}

void write_constants_csv(const std::vector<ConstantRow>& rows, std::ostream& out) {
  out << "q,p,K_hat,C_hat,seed,n_samples\n";
  for (const auto& r : rows) {
    out << num(r.q) << ',' << num(r.p) << ',' << num(r.K_hat) << ',' << num(r.C_hat) << ',' << r.seed << ','
        << r.n_samples << '\n';
  }
}

}  // namespace smoothconv
