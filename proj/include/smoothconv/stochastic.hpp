#ifndef SMOOTHCONV_STOCHASTIC_HPP
#define SMOOTHCONV_STOCHASTIC_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "smoothconv/geometry.hpp"
#include "smoothconv/semigroup.hpp"

namespace smoothconv {

/// Strictly increasing times 0 = t_0 < ... < t_m = T.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);

  static TimeGrid uniform(double horizon, std::size_t cells);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t cells() const noexcept { return times_.size() - 1; }
  double horizon() const noexcept { return times_.back(); }
  double step(std::size_t i) const { return times_.at(i + 1) - times_.at(i); }
  double mesh() const;

  /// The coarsening with 2^exponent equal cells; needs cells() divisible by 2^exponent.
  TimeGrid dyadic_partition(int exponent) const;

  /// Grid indices of the partition points. Throws if `partition` is not a
  /// subset of this grid or does not span [0, T].
  std::vector<std::size_t> nested_indices(const TimeGrid& partition) const;

 private:
  std::vector<double> times_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

inline GridPtr make_grid(TimeGrid grid) { return std::make_shared<const TimeGrid>(std::move(grid)); }

struct StreamId {
  std::uint64_t seed = 0;
  std::uint64_t trajectory = 0;
};

/// Brownian increments on a grid, one column of R^d per cell.
class NoisePath {
 public:
  NoisePath(GridPtr grid, Matrix increments, StreamId stream);

  const GridPtr& grid() const noexcept { return grid_; }
  const Matrix& increments() const noexcept { return increments_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(increments_.rows()); }
  const StreamId& stream() const noexcept { return stream_; }

  /// Increments of the same Brownian path on a coarser nested grid.
  NoisePath coarsen(const GridPtr& coarse) const;

 private:
  GridPtr grid_;
  Matrix increments_;
  StreamId stream_;
};

/// Gaussian increments with variance dt_i per coordinate, a pure function of
/// (seed, trajectory_index).
NoisePath sample_noise(const GridPtr& grid, std::size_t d, std::uint64_t seed,
                       std::uint64_t trajectory_index);

/// Read-only view of the first `length` increments of a noise path.
class NoisePrefix {
 public:
  NoisePrefix(const Matrix& increments, std::size_t length) : increments_(increments), length_(length) {}

  std::size_t length() const noexcept { return length_; }
  Eigen::Ref<const Vector> operator[](std::size_t i) const;

 private:
  const Matrix& increments_;
  std::size_t length_;
};

enum class ProcessRole { integrand, drift };

/**
 * Piecewise-constant grid-adapted process: block i (an n x d matrix for an
 * integrand, an n x 1 column for a drift) is the value on (t_i, t_{i+1}].
 *
 * Blocks can only come from constants, from builders that see the noise
 * prefix 0..i-1, or from an adapted simulation, so adaptedness holds by
 * construction.
 */
class StepProcess {
 public:
  using Builder = std::function<Matrix(std::size_t i, double t_i, const NoisePrefix& prefix)>;

  static StepProcess constant(const GridPtr& grid, const Matrix& block,
                              ProcessRole role = ProcessRole::integrand);
  static StepProcess zero(const GridPtr& grid, std::size_t rows, std::size_t cols,
                          ProcessRole role = ProcessRole::integrand);
  static StepProcess adapted(const NoisePath& noise, std::size_t rows, std::size_t cols,
                             const Builder& builder, ProcessRole role = ProcessRole::integrand);

  const GridPtr& grid() const noexcept { return grid_; }
  ProcessRole role() const noexcept { return role_; }
  std::size_t cells() const noexcept { return blocks_.size(); }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const Matrix& block(std::size_t i) const { return blocks_.at(i); }

  /// Blocks M g_i; a deterministic left factor keeps the process adapted.
  StepProcess left_multiplied(const Matrix& factor) const;
  /// g 1_{[0, t_stop]}: blocks at index >= stop_index are zeroed.
  StepProcess masked(std::size_t stop_index) const;

 private:
  friend struct AdaptedSimulation;
  StepProcess(GridPtr grid, std::vector<Matrix> blocks, std::size_t rows, std::size_t cols,
              ProcessRole role);

  GridPtr grid_;
  std::vector<Matrix> blocks_;
  std::size_t rows_;
  std::size_t cols_;
  ProcessRole role_;
};

/// One trajectory: states(:, k) is the value at grid time t_k.
class Path {
 public:
  Path(GridPtr grid, Matrix states);

  const GridPtr& grid() const noexcept { return grid_; }
  const Matrix& states() const noexcept { return states_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(states_.cols()); }
  Vector at(std::size_t k) const { return states_.col(static_cast<Eigen::Index>(k)); }

 private:
  GridPtr grid_;
  Matrix states_;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string scheme;
  std::string generator;
};

struct PathEnsemble {
  std::vector<Path> trajectories;
  GridPtr grid;
  QSpace space;
  Provenance provenance;
};

/// S_0 = 0, S_{k+1} = S_k + g_k dW_k.
Path simple_integral(const StepProcess& g, const NoisePath& w);

/// X_0 = 0, X_{k+1} = e^{dt_k A}(X_k + g_k dW_k).
Path convolve(const Generator& a, const StepProcess& g, const NoisePath& w);

/// Integrand block as a function of the current state (state feedback).
using FeedbackRecipe = std::function<Matrix(std::size_t i, double t_i, const Vector& state)>;

struct AdaptedSimulation {
  Path path;
  StepProcess integrand;

  /// Convolution whose integrand block at t_i is recipe(i, t_i, X_{t_i}).
  static AdaptedSimulation convolve(const Generator& a, std::size_t cols,
                                    const FeedbackRecipe& recipe, const NoisePath& w);
};

/// X_{k+1} = X_k + a_k dt_k + g_k dW_k.
Path drifted_path(const Vector& x0, const StepProcess& a, const StepProcess& g, const NoisePath& w);

struct ItoDecomposition {
  double stieltjes_sum = 0.0;
  double remainder_sum = 0.0;
  double abs_remainder_sum = 0.0;
  double psi_start = 0.0;
  double psi_end = 0.0;
  /// |psi(X_T) - psi(X_0) - stieltjes_sum - remainder_sum|.
  double telescoping_defect = 0.0;
};

ItoDecomposition ito_decomposition(const Path& path, const QSpace& space, double p,
                                   const TimeGrid& partition, int quad_points = 257);

class StoppingRule {
 public:
  enum class Kind { deterministic, level_hit };

  static StoppingRule deterministic(double t) { return {Kind::deterministic, t}; }
  static StoppingRule level_hit(double level) { return {Kind::level_hit, level}; }

  Kind kind() const noexcept { return kind_; }
  double value() const noexcept { return value_; }
  std::string describe() const;

 private:
  StoppingRule(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_;
  double value_;
};

/// Stopping index on the grid; the decision at index k looks at X_0..X_k only.
std::size_t apply_stopping(const Path& path, const QSpace& space, const StoppingRule& rule);

enum class GammaMethod { exact2, monte_carlo };

struct GammaNormSpec {
  GammaMethod method = GammaMethod::exact2;
  std::size_t samples = 100000;
  std::uint64_t seed = 0x9a33a;
};

struct GammaEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// E|T gamma|_q^2 for a standard Gaussian gamma in R^d. Monte-Carlo estimates
/// with equal spec reuse the same Gaussian sample (common random numbers).
GammaEstimate gamma_norm_sq(const Matrix& block, const QSpace& space, const GammaNormSpec& spec);

/// (sum_i |g_i|_gamma^2 dt_i)^{p/2} for one trajectory.
double integrability_stat(const StepProcess& g, const QSpace& space, double p,
                          const GammaNormSpec& spec);

/// CSV rows "t,x_1,...,x_n".
void write_path_csv(const Path& path, std::ostream& out);

}  // namespace smoothconv

#endif  // SMOOTHCONV_STOCHASTIC_HPP
