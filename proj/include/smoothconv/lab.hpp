#ifndef SMOOTHCONV_LAB_HPP
#define SMOOTHCONV_LAB_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smoothconv/geometry.hpp"
#include "smoothconv/semigroup.hpp"
#include "smoothconv/stats.hpp"
#include "smoothconv/stochastic.hpp"

namespace smoothconv {

enum class ExperimentKind { maximal, burkholder, ito_convergence, remainder_bound, lenglart, yosida, drift_bound };

std::string to_string(ExperimentKind kind);
std::optional<ExperimentKind> experiment_from_string(const std::string& name);
const std::vector<ExperimentKind>& all_experiments();

/// Integrand recipes. `feedback` scales G by 1 + amplitude * tanh(|X_t|), a
/// bounded Lipschitz function of the current state; `rotation` uses G R_i with
/// R_i an independent Haar-random orthogonal d x d matrix per cell.
enum class Recipe { constant, feedback, rotation };

std::string to_string(Recipe recipe);

struct IntegrandSpec {
  Recipe recipe = Recipe::constant;
  Matrix G;
  double amplitude = 0.5;
};

enum class ConfigRole { single, train, holdout };

std::string to_string(ConfigRole role);

/// Raised for configurations that are invalid or degenerate for an experiment.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by run_lenglart when E xi_tau <= E a_tau fails for a stopping rule.
class LenglartHypothesisError : public std::runtime_error {
 public:
  LenglartHypothesisError(const std::string& what, std::string rule)
      : std::runtime_error(what), rule_(std::move(rule)) {}
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

struct ExperimentConfig {
  std::string name;
  /// Configs expanded from one document entry (a list-valued p) share this key
  /// and therefore their simulated paths.
  std::string base_name;
  ExperimentKind kind = ExperimentKind::maximal;
  QSpace space{1, 2.0};
  double p = 2.0;
  double T = 1.0;
  std::vector<int> mesh_exponents{10};
  std::size_t trajectories = 10000;
  std::uint64_t seed = 1;
  std::shared_ptr<const Generator> generator;
  std::string generator_label = "zero";
  IntegrandSpec g;
  std::optional<Vector> drift;
  Vector x0;
  GammaNormSpec gamma;
  std::vector<double> epsilons;
  std::vector<double> r_values;
  std::vector<double> T_list;
  std::vector<int> m_list;
  int quad_points = 33;
  std::string group;
  ConfigRole role = ConfigRole::single;
  std::size_t dump_paths = 0;

  /// Checks every invariant the experiments rely on; throws ConfigError.
  void validate() const;
  int finest_exponent() const;
  std::size_t noise_dim() const { return static_cast<std::size_t>(g.G.cols()); }
  /// Horizons simulated by run_maximal: T followed by T_list entries not equal to T.
  std::vector<double> horizons() const;
};

struct LabOptions {
  unsigned workers = 1;
};

struct Statistic {
  std::string name;
  std::optional<double> param;
  double value = 0.0;
  double se = 0.0;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct EstimateReport {
  std::string experiment;
  std::string config;
  std::string group;
  std::string role;
  std::uint64_t seed = 0;
  double q = 2.0;
  double p = 2.0;
  double T = 1.0;
  std::vector<Statistic> stats;
  std::vector<Check> checks;
  double wall_seconds = 0.0;

  void add(std::string name, std::optional<double> param, double value, double se = 0.0);
  void check(std::string name, bool passed, std::string detail);
  const Statistic& stat(const std::string& name, std::optional<double> param = std::nullopt) const;
  bool passed() const;
};

/// p-independent output of the maximal-inequality simulation at one horizon.
struct MaximalSample {
  double T = 1.0;
  std::vector<double> sup_norm;
  /// sum_i |g_i|_gamma^2 dt_i per trajectory.
  std::vector<double> energy;
  GammaEstimate gamma_G;
};

std::vector<MaximalSample> simulate_maximal(const ExperimentConfig& cfg, const LabOptions& opts);
EstimateReport maximal_report(const ExperimentConfig& cfg, const std::vector<MaximalSample>& samples);

/// C_hat = (LHS/RHS)^{1/p} with batched SE; 0 when both sides vanish.
MeanSe maximal_constant(const MaximalSample& sample, double p);

EstimateReport run_maximal(const ExperimentConfig& cfg, const LabOptions& opts = {});
EstimateReport run_burkholder(const ExperimentConfig& cfg, const LabOptions& opts = {});
EstimateReport run_ito_convergence(const ExperimentConfig& cfg, const LabOptions& opts = {});

struct RemainderSample {
  std::vector<double> abs_remainder;
  std::vector<double> sup_p;
  std::vector<double> energy_p;
};

RemainderSample simulate_remainder(const ExperimentConfig& cfg, const LabOptions& opts);

struct RemainderConstants {
  double C = 0.0;
  double C_prime = 0.0;
  bool feasible = false;
};

/// Smallest (C, C') in the sense of the least total right-hand side over all
/// constraints eps C S_k + C' (eps^{1-2/p} + 1) G_k >= R_k, C, C' >= 0.
RemainderConstants fit_remainder_constants(const std::vector<RemainderSample>& samples, double p,
                                           const std::vector<double>& epsilons);

EstimateReport remainder_report(const ExperimentConfig& cfg, const RemainderSample& sample);
EstimateReport run_remainder_bound(const ExperimentConfig& cfg, const LabOptions& opts = {});
EstimateReport run_lenglart(const ExperimentConfig& cfg, const LabOptions& opts = {});
EstimateReport run_yosida(const ExperimentConfig& cfg, const LabOptions& opts = {});
EstimateReport run_drift_bound(const ExperimentConfig& cfg, const LabOptions& opts = {});

EstimateReport run_experiment(const ExperimentConfig& cfg, const LabOptions& opts = {});

/// The first `count` trajectories of the experiment's process at horizon T.
std::vector<Path> sample_paths(const ExperimentConfig& cfg, std::size_t count);

struct MaximalMember {
  const ExperimentConfig* cfg;
  const std::vector<MaximalSample>* samples;
};

/**
 * Fits C_hat(p) as the largest training estimate at each member's own T and
 * validates LHS <= C_hat^p RHS on every holdout member within 3 SE. When the
 * training members share additional horizons, also checks that the training
 * fit over those horizons varies by a factor of at most 1.25 (p = 2 only).
 */
EstimateReport fit_maximal_group(const std::string& group, double p,
                                 const std::vector<MaximalMember>& members);

struct RemainderMember {
  const ExperimentConfig* cfg;
  const RemainderSample* sample;
};

EstimateReport fit_remainder_group(const std::string& group, double p,
                                   const std::vector<RemainderMember>& members);

/// (2 - r) / (1 - r).
double lenglart_factor(double r);

}  // namespace smoothconv

#endif  // SMOOTHCONV_LAB_HPP
