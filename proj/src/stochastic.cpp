#include "smoothconv/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "smoothconv/rng.hpp"

namespace smoothconv {

namespace {

void require_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (a == b) return;
  if (!a || !b || a->times() != b->times()) {
    throw std::invalid_argument(fmt::format("grid mismatch: {}", what));
  }
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw std::invalid_argument("time grid needs at least one cell");
  if (times_.front() != 0.0) throw std::invalid_argument("time grid must start at t = 0");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw std::invalid_argument(fmt::format("time grid not strictly increasing at index {}", i));
    }
  }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t cells) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon T must be positive");
  if (cells == 0) throw std::invalid_argument("grid needs at least one cell");
  std::vector<double> t(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(cells);
  t.back() = horizon;
  return TimeGrid(std::move(t));
}

double TimeGrid::mesh() const {
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < times_.size(); ++i) m = std::max(m, times_[i + 1] - times_[i]);
  return m;
}

TimeGrid TimeGrid::dyadic_partition(int exponent) const {
  if (exponent < 0 || exponent > 40) throw std::invalid_argument("dyadic exponent out of range");
  const std::size_t parts = std::size_t{1} << exponent;
  if (cells() % parts != 0) {
    throw std::invalid_argument(
        fmt::format("2^{} cells do not nest in a grid with {} cells", exponent, cells()));
  }
  const std::size_t stride = cells() / parts;
  std::vector<double> t;
  t.reserve(parts + 1);
  for (std::size_t k = 0; k <= parts; ++k) t.push_back(times_[k * stride]);
  return TimeGrid(std::move(t));
}

std::vector<std::size_t> TimeGrid::nested_indices(const TimeGrid& partition) const {
  const double tol = 1e-12 * horizon();
  if (std::abs(partition.horizon() - horizon()) > tol) {
    throw std::invalid_argument("partition does not span the trajectory horizon");
  }
  std::vector<std::size_t> idx;
  idx.reserve(partition.times().size());
  std::size_t k = 0;
  for (double t : partition.times()) {
    while (k < times_.size() && times_[k] < t - tol) ++k;
    if (k == times_.size() || std::abs(times_[k] - t) > tol) {
      throw std::invalid_argument(fmt::format("partition point t = {} is not a grid point", t));
    }
    idx.push_back(k);
  }
  return idx;
}

NoisePath::NoisePath(GridPtr grid, Matrix increments, StreamId stream)
    : grid_(std::move(grid)), increments_(std::move(increments)), stream_(stream) {
  if (!grid_) throw std::invalid_argument("noise path without grid");
  if (static_cast<std::size_t>(increments_.cols()) != grid_->cells()) {
    throw std::invalid_argument("noise increments do not match grid cells");
  }
}

NoisePath NoisePath::coarsen(const GridPtr& coarse) const {
  const auto idx = grid_->nested_indices(*coarse);
  Matrix inc(increments_.rows(), static_cast<Eigen::Index>(coarse->cells()));
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    inc.col(static_cast<Eigen::Index>(k)) =
        increments_.middleCols(static_cast<Eigen::Index>(idx[k]),
                               static_cast<Eigen::Index>(idx[k + 1] - idx[k]))
            .rowwise()
            .sum();
  }
  return NoisePath(coarse, std::move(inc), stream_);
}

NoisePath sample_noise(const GridPtr& grid, std::size_t d, std::uint64_t seed,
                       std::uint64_t trajectory_index) {
  if (d == 0) throw std::invalid_argument("noise dimension must be at least 1");
  const rng::CounterNormal source(seed, rng::Stream::brownian);
  const std::size_t m = grid->cells();
  Matrix inc(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const double scale = std::sqrt(grid->step(i));
    for (std::size_t j = 0; j < d; j += 2) {
      const auto z = source.pair(trajectory_index, static_cast<std::uint32_t>(i),
                                 static_cast<std::uint32_t>(j / 2));
      inc(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = scale * z[0];
      if (j + 1 < d) inc(static_cast<Eigen::Index>(j + 1), static_cast<Eigen::Index>(i)) = scale * z[1];
    }
  }
  return NoisePath(grid, std::move(inc), {seed, trajectory_index});
}

Eigen::Ref<const Vector> NoisePrefix::operator[](std::size_t i) const {
  if (i >= length_) {
    throw std::out_of_range(fmt::format("increment {} is not yet revealed (prefix length {})", i, length_));
  }
  return increments_.col(static_cast<Eigen::Index>(i));
}

StepProcess::StepProcess(GridPtr grid, std::vector<Matrix> blocks, std::size_t rows,
                         std::size_t cols, ProcessRole role)
    : grid_(std::move(grid)), blocks_(std::move(blocks)), rows_(rows), cols_(cols), role_(role) {
  if (role_ == ProcessRole::drift && cols_ != 1) {
    throw std::invalid_argument("drift blocks must be single columns");
  }
  for (const Matrix& b : blocks_) {
    if (static_cast<std::size_t>(b.rows()) != rows_ || static_cast<std::size_t>(b.cols()) != cols_) {
      throw std::invalid_argument(fmt::format("block of shape {}x{} in a {}x{} process", b.rows(),
                                              b.cols(), rows_, cols_));
    }
  }
}

StepProcess StepProcess::constant(const GridPtr& grid, const Matrix& block, ProcessRole role) {
  return StepProcess(grid, std::vector<Matrix>(grid->cells(), block),
                     static_cast<std::size_t>(block.rows()), static_cast<std::size_t>(block.cols()),
                     role);
}

StepProcess StepProcess::zero(const GridPtr& grid, std::size_t rows, std::size_t cols,
                              ProcessRole role) {
  return constant(grid, Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                  role);
}

StepProcess StepProcess::adapted(const NoisePath& noise, std::size_t rows, std::size_t cols,
                                 const Builder& builder, ProcessRole role) {
  const auto& grid = noise.grid();
  std::vector<Matrix> blocks;
  blocks.reserve(grid->cells());
  for (std::size_t i = 0; i < grid->cells(); ++i) {
    blocks.push_back(builder(i, grid->times()[i], NoisePrefix(noise.increments(), i)));
  }
  return StepProcess(grid, std::move(blocks), rows, cols, role);
}

StepProcess StepProcess::left_multiplied(const Matrix& factor) const {
  std::vector<Matrix> blocks;
  blocks.reserve(blocks_.size());
  for (const Matrix& b : blocks_) blocks.push_back(factor * b);
  return StepProcess(grid_, std::move(blocks), static_cast<std::size_t>(factor.rows()), cols_, role_);
}

StepProcess StepProcess::masked(std::size_t stop_index) const {
  std::vector<Matrix> blocks = blocks_;
  for (std::size_t i = stop_index; i < blocks.size(); ++i) blocks[i].setZero();
  return StepProcess(grid_, std::move(blocks), rows_, cols_, role_);
}

Path::Path(GridPtr grid, Matrix states) : grid_(std::move(grid)), states_(std::move(states)) {
  if (static_cast<std::size_t>(states_.cols()) != grid_->times().size()) {
    throw std::invalid_argument("path length does not match grid");
  }
}

Path simple_integral(const StepProcess& g, const NoisePath& w) {
  require_same_grid(g.grid(), w.grid(), "integrand vs noise");
  if (g.cols() != w.dim()) throw std::invalid_argument("integrand columns do not match noise dimension");
  const std::size_t m = g.cells();
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(m + 1));
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    s.col(k + 1).noalias() = s.col(k) + g.block(i) * w.increments().col(k);
  }
  return Path(g.grid(), std::move(s));
}

Path convolve(const Generator& a, const StepProcess& g, const NoisePath& w) {
  require_same_grid(g.grid(), w.grid(), "integrand vs noise");
  if (g.cols() != w.dim()) throw std::invalid_argument("integrand columns do not match noise dimension");
  if (g.rows() != a.space().dim()) throw std::invalid_argument("integrand rows do not match generator");
  const std::size_t m = g.cells();
  const auto n = static_cast<Eigen::Index>(g.rows());
  Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(m + 1));
  Vector tmp(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    tmp.noalias() = g.block(i) * w.increments().col(k);
    tmp += x.col(k);
    x.col(k + 1).noalias() = a.exp(g.grid()->step(i)) * tmp;
  }
  return Path(g.grid(), std::move(x));
}

AdaptedSimulation AdaptedSimulation::convolve(const Generator& a, std::size_t cols,
                                              const FeedbackRecipe& recipe, const NoisePath& w) {
  if (cols != w.dim()) throw std::invalid_argument("integrand columns do not match noise dimension");
  const GridPtr& grid = w.grid();
  const std::size_t m = grid->cells();
  const auto n = static_cast<Eigen::Index>(a.space().dim());
  Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(m + 1));
  std::vector<Matrix> blocks;
  blocks.reserve(m);
  Vector state(n);
  Vector tmp(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    state = x.col(k);
    blocks.push_back(recipe(i, grid->times()[i], state));
    tmp.noalias() = blocks.back() * w.increments().col(k);
    tmp += state;
    x.col(k + 1).noalias() = a.exp(grid->step(i)) * tmp;
  }
  return {Path(grid, std::move(x)),
          StepProcess(grid, std::move(blocks), static_cast<std::size_t>(n), cols, ProcessRole::integrand)};
}

Path drifted_path(const Vector& x0, const StepProcess& a, const StepProcess& g, const NoisePath& w) {
  require_same_grid(a.grid(), w.grid(), "drift vs noise");
  require_same_grid(g.grid(), w.grid(), "integrand vs noise");
  if (a.role() != ProcessRole::drift) throw std::invalid_argument("first process must be a drift");
  if (g.cols() != w.dim()) throw std::invalid_argument("integrand columns do not match noise dimension");
  if (a.rows() != static_cast<std::size_t>(x0.size()) || g.rows() != static_cast<std::size_t>(x0.size())) {
    throw std::invalid_argument("state dimension mismatch");
  }
  const std::size_t m = g.cells();
  Matrix x(x0.size(), static_cast<Eigen::Index>(m + 1));
  x.col(0) = x0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    x.col(k + 1).noalias() = x.col(k) + a.block(i).col(0) * w.grid()->step(i) + g.block(i) * w.increments().col(k);
  }
  return Path(w.grid(), std::move(x));
}

ItoDecomposition ito_decomposition(const Path& path, const QSpace& space, double p,
                                   const TimeGrid& partition, int quad_points) {
  const auto idx = path.grid()->nested_indices(partition);
  ItoDecomposition out;
  Vector x = path.at(idx.front());
  out.psi_start = psi(x, space, p);
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    Vector y = path.at(idx[k + 1]);
    out.stieltjes_sum += psi_prime_apply(x, y - x, space, p);
    const double r = taylor_remainder(x, y, space, p, quad_points);
    out.remainder_sum += r;
    out.abs_remainder_sum += std::abs(r);
    x = std::move(y);
  }
  out.psi_end = psi(x, space, p);
  out.telescoping_defect =
      std::abs(out.psi_end - out.psi_start - out.stieltjes_sum - out.remainder_sum);
  return out;
}

std::string StoppingRule::describe() const {
  return kind_ == Kind::deterministic ? fmt::format("deterministic(t={:.6g})", value_)
                                      : fmt::format("level_hit(lambda={:.6g})", value_);
}

std::size_t apply_stopping(const Path& path, const QSpace& space, const StoppingRule& rule) {
  const auto& t = path.grid()->times();
  const std::size_t last = path.size() - 1;
  if (rule.kind() == StoppingRule::Kind::deterministic) {
    const double tol = 1e-12 * path.grid()->horizon();
    std::size_t k = 0;
    while (k < last && t[k + 1] <= rule.value() + tol) ++k;
    return k;
  }
  for (std::size_t k = 0; k <= last; ++k) {
    if (q_norm(path.states().col(static_cast<Eigen::Index>(k)), space) >= rule.value()) return k;
  }
  return last;
}

GammaEstimate gamma_norm_sq(const Matrix& block, const QSpace& space, const GammaNormSpec& spec) {
  if (static_cast<std::size_t>(block.rows()) != space.dim()) {
    throw std::invalid_argument("operator rows do not match the space dimension");
  }
  if (spec.method == GammaMethod::exact2) {
    if (space.q() != 2.0) {
      throw std::invalid_argument(
          fmt::format("exact gamma norm is only available for q = 2 (got q = {})", space.q()));
    }
    return {block.squaredNorm(), 0.0};
  }
  if (spec.samples < 2) throw std::invalid_argument("Monte-Carlo gamma norm needs at least 2 samples");
  const rng::CounterNormal source(spec.seed, rng::Stream::gamma_norm);
  const auto d = block.cols();
  Vector g(d);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < spec.samples; ++k) {
    for (Eigen::Index j = 0; j < d; j += 2) {
      const auto z = source.pair(k, static_cast<std::uint32_t>(j / 2), 0);
      g[j] = z[0];
      if (j + 1 < d) g[j + 1] = z[1];
    }
    const double v = lr_norm(block * g, space.q());
    sum += v * v;
    sum_sq += v * v * v * v;
  }
  const double n = static_cast<double>(spec.samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq / n - mean * mean) * n / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double integrability_stat(const StepProcess& g, const QSpace& space, double p,
                          const GammaNormSpec& spec) {
  if (!(p > 0.0)) throw std::invalid_argument("integrability exponent must be positive");
  double energy = 0.0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    energy += gamma_norm_sq(g.block(i), space, spec).value * g.grid()->step(i);
  }
  return std::pow(energy, p / 2.0);
}

void write_path_csv(const Path& path, std::ostream& out) {
  const auto n = path.states().rows();
  out << "t";
  for (Eigen::Index j = 0; j < n; ++j) out << ",x_" << (j + 1);
  out << "\n";
  for (std::size_t k = 0; k < path.size(); ++k) {
    out << fmt::format("{:.17g}", path.grid()->times()[k]);
    for (Eigen::Index j = 0; j < n; ++j) {
      out << fmt::format(",{:.17g}", path.states()(j, static_cast<Eigen::Index>(k)));
    }
    out << "\n";
  }
}

}  // namespace smoothconv
