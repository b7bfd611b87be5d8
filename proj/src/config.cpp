#include "smoothconv/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "smoothconv/rng.hpp"

namespace smoothconv {

namespace {

using nlohmann::json;

const std::set<std::string> kEntryFields = {
    "name",     "experiment", "n",       "q",      "p",         "T",          "mesh_exponents",
    "trajectories", "seed",   "generator", "integrand", "drift",  "x0",         "gamma",
    "epsilons", "r",          "T_list",  "m_list", "quad_points", "group",    "role",
    "dump_paths"};

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigError(fmt::format("{}{}: {}", path_, field.empty() ? "" : "." + field, msg));
  }

  void require_object(const std::set<std::string>& allowed) const {
    if (!node_.is_object()) fail("", "expected an object");
    for (const auto& [key, value] : node_.items()) {
      if (!allowed.count(key)) fail(key, "unknown field");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key); }
  const json& at(const std::string& key) const {
    if (!node_.contains(key)) fail(key, "required field missing");
    return node_.at(key);
  }

  double number(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::uint64_t unsigned_int(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? unsigned_int(key) : fallback;
  }

  std::string string(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(fmt::format("{}[{}]", key, i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) fail(fmt::format("{}[{}]", key, i), "expected an integer");
      out.push_back(v[i].get<int>());
    }
    return out;
  }

  Matrix matrix(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of rows");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    if (cols == 0) fail(key, "rows must be non-empty arrays");
    Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_array() || v[i].size() != cols) fail(fmt::format("{}[{}]", key, i), "ragged matrix row");
      for (std::size_t j = 0; j < cols; ++j) {
        if (!v[i][j].is_number()) fail(fmt::format("{}[{}][{}]", key, i, j), "expected a number");
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<double>();
      }
    }
    return m;
  }

  Vector vector(const std::string& key) const {
    const auto xs = numbers(key);
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }

  Reader child(const std::string& key) const { return Reader(at(key), path_ + "." + key); }
  const std::string& path() const noexcept { return path_; }

 private:
  const json& node_;
  std::string path_;
};

std::shared_ptr<const Generator> read_generator(const Reader& entry, const QSpace& space, std::uint64_t seed,
                                                std::string& label) {
  if (!entry.has("generator")) {
    label = "zero";
    return std::make_shared<const Generator>(diagonal_generator(std::vector<double>(space.dim(), 0.0), space));
  }
  const Reader gen = entry.child("generator");
  gen.require_object({"type", "lambdas", "matrix", "cert_samples", "cert_times"});
  label = gen.string("type");
  try {
    if (label == "zero") {
      return std::make_shared<const Generator>(diagonal_generator(std::vector<double>(space.dim(), 0.0), space));
    }
    if (label == "diagonal") {
      return std::make_shared<const Generator>(diagonal_generator(gen.numbers("lambdas"), space));
    }
    if (label == "dense") {
      const auto times = gen.has("cert_times") ? gen.numbers("cert_times") : std::vector<double>{0.05, 0.25, 1.0, 4.0};
      return std::make_shared<const Generator>(general_generator(
          gen.matrix("matrix"), space, static_cast<std::size_t>(gen.unsigned_int("cert_samples", 2000)), times,
          seed));
    }
  } catch (const CertificationError& e) {
    gen.fail("", fmt::format("uncertifiable generator: {}", e.what()));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    gen.fail("", e.what());
  }
  gen.fail("type", fmt::format("unknown generator type \"{}\" (zero | diagonal | dense)", label));
}

std::string p_suffix(double p) { return fmt::format("_p{}", p); }

std::vector<ExperimentConfig> read_entry(const Reader& entry, std::uint64_t master_seed) {
  entry.require_object(kEntryFields);
  ExperimentConfig base;
  base.name = entry.string("name");
  if (base.name.empty()) entry.fail("name", "must not be empty");
  base.base_name = base.name;
  const auto kind_name = entry.string("experiment");
  const auto kind = experiment_from_string(kind_name);
  if (!kind) entry.fail("experiment", fmt::format("unknown experiment \"{}\"", kind_name));
  base.kind = *kind;

  const double n_raw = entry.number("n");
  if (!(n_raw >= 1.0 && n_raw <= 64.0 && n_raw == std::floor(n_raw))) entry.fail("n", "must be an integer in [1, 64]");
  const auto n = static_cast<std::size_t>(n_raw);
  try {
    base.space = QSpace(n, entry.number("q"));
  } catch (const std::invalid_argument& e) {
    entry.fail("q", e.what());
  }
  base.T = entry.number("T", 1.0);
  if (entry.has("mesh_exponents")) base.mesh_exponents = entry.integers("mesh_exponents");
  base.trajectories = static_cast<std::size_t>(entry.unsigned_int("trajectories", 10000));
  base.seed = entry.has("seed") ? entry.unsigned_int("seed") : derive_seed(master_seed, base.name);

  base.generator = read_generator(entry, base.space, base.seed, base.generator_label);

  const Reader integrand = entry.child("integrand");
  integrand.require_object({"recipe", "matrix", "amplitude"});
  const auto recipe = integrand.string("recipe", "constant");
  if (recipe == "constant") base.g.recipe = Recipe::constant;
  else if (recipe == "feedback") base.g.recipe = Recipe::feedback;
  else if (recipe == "rotation") base.g.recipe = Recipe::rotation;
  else integrand.fail("recipe", fmt::format("unknown recipe \"{}\" (constant | feedback | rotation)", recipe));
  base.g.G = integrand.matrix("matrix");
  base.g.amplitude = integrand.number("amplitude", 0.5);

  if (entry.has("drift")) base.drift = entry.vector("drift");
  base.x0 = entry.has("x0") ? entry.vector("x0") : Vector::Zero(static_cast<Eigen::Index>(n));

  base.gamma.method = base.space.q() == 2.0 ? GammaMethod::exact2 : GammaMethod::monte_carlo;
  if (entry.has("gamma")) {
    const Reader gamma = entry.child("gamma");
    gamma.require_object({"method", "samples", "seed"});
    const auto method = gamma.string("method", base.space.q() == 2.0 ? "exact2" : "mc");
    if (method == "exact2") base.gamma.method = GammaMethod::exact2;
    else if (method == "mc") base.gamma.method = GammaMethod::monte_carlo;
    else gamma.fail("method", fmt::format("unknown gamma method \"{}\" (exact2 | mc)", method));
    base.gamma.samples = static_cast<std::size_t>(gamma.unsigned_int("samples", base.gamma.samples));
    base.gamma.seed = gamma.unsigned_int("seed", base.gamma.seed);
  }
  if (entry.has("epsilons")) base.epsilons = entry.numbers("epsilons");
  if (entry.has("r")) base.r_values = entry.numbers("r");
  if (entry.has("T_list")) base.T_list = entry.numbers("T_list");
  if (entry.has("m_list")) base.m_list = entry.integers("m_list");
  base.quad_points = static_cast<int>(entry.unsigned_int("quad_points", 33));
  base.group = entry.string("group", "");
  const auto role = entry.string("role", "single");
  if (role == "single") base.role = ConfigRole::single;
  else if (role == "train") base.role = ConfigRole::train;
  else if (role == "holdout") base.role = ConfigRole::holdout;
  else entry.fail("role", fmt::format("unknown role \"{}\" (single | train | holdout)", role));
  if (base.role != ConfigRole::single && base.group.empty()) entry.fail("group", "train/holdout configs need a group");
  base.dump_paths = static_cast<std::size_t>(entry.unsigned_int("dump_paths", 0));

  std::vector<double> ps;
  const auto& p_node = entry.at("p");
  if (p_node.is_array()) {
    ps = entry.numbers("p");
    if (ps.empty()) entry.fail("p", "empty list");
  } else {
    ps.push_back(entry.number("p"));
  }
  std::vector<ExperimentConfig> out;
  for (double p : ps) {
    ExperimentConfig c = base;
    c.p = p;
    if (p_node.is_array()) c.name = base.name + p_suffix(p);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      entry.fail("", e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return rng::splitmix64(master_seed ^ rng::splitmix64(h));
}

std::vector<ExperimentConfig> parse_config_text(const std::string& text, const std::string& source,
                                                std::uint64_t master_seed) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(fmt::format("{}:{}:{}: malformed JSON ({})", source, line, col, e.what()));
  }
  const Reader top(doc, source);
  top.require_object({"experiments"});
  const auto& list = top.at("experiments");
  if (!list.is_array()) top.fail("experiments", "expected an array");
  std::vector<ExperimentConfig> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Reader entry(list[i], fmt::format("{}: experiments[{}]", source, i));
    for (auto& c : read_entry(entry, master_seed)) {
      if (!names.insert(c.name).second) entry.fail("name", fmt::format("duplicate config name \"{}\"", c.name));
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<ExperimentConfig> parse_config(const std::string& path, std::uint64_t master_seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open config file", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path, master_seed);
}

}  // namespace smoothconv
