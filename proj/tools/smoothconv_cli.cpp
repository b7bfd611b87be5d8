// Batch front end: run experiment suites, emit plot tables, tabulate constants.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "smoothconv/suite.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

unsigned default_workers() {
  if (const char* env = std::getenv("SMOOTH_CONVOLVE_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "ignoring invalid SMOOTH_CONVOLVE_WORKERS=" << env << "\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo experiments for maximal inequalities of stochastic convolutions in l^q"};
  app.require_subcommand(1);

  smoothconv::RunManifest manifest;
  std::string select;
  auto* run = app.add_subcommand("run", "run the experiments of one or more config files");
  run->add_option("config", manifest.config_paths, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", manifest.out_dir, "run directory to create")->required();
  run->add_option("--seed", manifest.master_seed, "master seed for configs without their own seed");
  auto* workers_opt = run->add_option("--workers", manifest.workers, "worker threads (default: $SMOOTH_CONVOLVE_WORKERS or 1)");
  auto* select_opt = run->add_option("--select", select, "comma-separated experiment names");
  run->add_flag("--force", manifest.force, "overwrite a completed run directory");

  std::string run_dir;
  auto* plot = app.add_subcommand("plotdata", "write plot-ready tables for a completed run");
  plot->add_option("run_dir", run_dir, "run directory")->required();

  std::string qs = "2,3,4";
  std::string ps = "2,3,4";
  std::size_t dim = 3;
  std::size_t samples = 20000;
  std::uint64_t seed = 1;
  std::string out_file;
  auto* constants = app.add_subcommand("constants", "tabulate K_hat(q) and the two-term remainder constant C_hat(p, q)");
  constants->add_option("--q", qs, "comma-separated q values");
  constants->add_option("--p", ps, "comma-separated p values");
  constants->add_option("--dim", dim, "dimension n");
  constants->add_option("--samples", samples, "sampled pairs per estimate");
  constants->add_option("--seed", seed, "seed");
  constants->add_option("--out", out_file, "CSV file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (workers_opt->count() == 0) manifest.workers = default_workers();
      if (manifest.workers < 1) throw CLI::ValidationError("--workers", "must be >= 1");
      if (select_opt->count() > 0) manifest.selectors = split_list(select);
      return smoothconv::run_suite(manifest, std::cerr);
    }
    if (*plot) {
      for (const auto& f : smoothconv::emit_plotdata(run_dir)) std::cout << f << "\n";
      return 0;
    }
    if (*constants) {
      auto to_numbers = [](const std::string& s) {
        std::vector<double> v;
        for (const auto& x : split_list(s)) v.push_back(std::stod(x));
        return v;
      };
      const auto rows = smoothconv::constants_table(to_numbers(qs), to_numbers(ps), dim, samples, seed);
      if (out_file.empty()) {
        smoothconv::write_constants_csv(rows, std::cout);
      } else {
        std::ofstream f(out_file);
        smoothconv::write_constants_csv(rows, f);
      }
      return 0;
    }
  } catch (const smoothconv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
