#ifndef SMOOTHCONV_SUITE_HPP
#define SMOOTHCONV_SUITE_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "smoothconv/lab.hpp"

namespace smoothconv {

struct RunManifest {
  std::vector<std::string> config_paths;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  std::string out_dir;
  /// nullopt runs every experiment; an empty list runs none.
  std::optional<std::vector<std::string>> selectors;
  bool force = false;
};

/// Raised when a run directory cannot be (re)created.
class RunDirectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Runs the selected experiments and writes results.csv, summary.json,
 * manifest.json and a COMPLETE marker into out_dir (assembled in a sibling
 * temporary directory and renamed into place). Returns 0 iff every experiment
 * ran and every check passed. Progress lines go to `log`.
 */
int run_suite(const RunManifest& manifest, std::ostream& log);

/// Long-format rows: experiment,config,group,role,q,p,T,seed,statistic,param,value,se.
void write_results_csv(const std::vector<EstimateReport>& reports, std::ostream& out);

/// Writes plot/<experiment>.csv tables for a completed run; throws otherwise.
std::vector<std::string> emit_plotdata(const std::string& run_dir);

struct ConstantRow {
  double q = 2.0;
  double p = 2.0;
  double K_hat = 0.0;
  double C_hat = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
};

/// Smoothness constant K_hat(q) and two-term remainder constant C_hat(p, q) on R^dim.
std::vector<ConstantRow> constants_table(const std::vector<double>& qs, const std::vector<double>& ps,
                                         std::size_t dim, std::size_t samples, std::uint64_t seed);
void write_constants_csv(const std::vector<ConstantRow>& rows, std::ostream& out);

}  // namespace smoothconv

#endif  // SMOOTHCONV_SUITE_HPP
