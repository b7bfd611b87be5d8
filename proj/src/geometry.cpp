#include "smoothconv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "smoothconv/rng.hpp"

namespace smoothconv {

namespace {

// |t|^r with the integer exponents that dominate the experiments unrolled.
inline double abs_pow(double t, double r) {
  const double a = std::abs(t);
  if (r == 1.0) return a;
  if (r == 2.0) return a * a;
  if (r == 3.0) return a * a * a;
  if (r == 4.0) return (a * a) * (a * a);
  return std::pow(a, r);
}

inline double signed_pow(double t, double r) {
  const double v = abs_pow(t, r);
  return t < 0.0 ? -v : v;
}

inline double nonneg_pow(double base, double r) {
  if (r == 0.0) return 1.0;
  if (r == 1.0) return base;
  if (r == 2.0) return base * base;
  if (r == 3.0) return base * base * base;
  return std::pow(base, r);
}

void check_dim(const Vector& x, const QSpace& space) {
  if (static_cast<std::size_t>(x.size()) != space.dim()) {
    throw std::invalid_argument(fmt::format("dimension mismatch: vector has {} entries, space has {}",
                                            x.size(), space.dim()));
  }
}

void check_power(double p) {
  if (!(p >= 2.0) || !std::isfinite(p)) {
    throw std::invalid_argument(fmt::format("exponent p = {} outside [2, inf)", p));
  }
}

bool is_even_integer(double v) { return v == std::floor(v) && std::fmod(v, 2.0) == 0.0; }

// psi'(z)(h) for the general l^q case.
double psi_prime_apply_unchecked(const Vector& z, const Vector& h, double q, double p) {
  const double n = lr_norm(z, q);
  if (n == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (z[j] != 0.0) acc += signed_pow(z[j] / n, q - 1.0) * h[j];
  }
  return p * nonneg_pow(n, p - 1.0) * acc;
}

// Composite Simpson starting from `nodes` points and doubling until the rule on
// every other node agrees to a relative 1e-10 of the integral of |f|, or to
// the rounding level of values of size `magnitude`.
double simpson(const auto& f, double a, double b, int nodes, double magnitude) {
  std::size_t intervals = static_cast<std::size_t>(nodes - 1);
  std::vector<double> v(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k) v[k] = f(a + (b - a) * static_cast<double>(k) / intervals);
  const auto rule = [&](std::size_t stride) {
    double acc = v.front() + v.back();
    const std::size_t n = intervals / stride;
    for (std::size_t k = 1; k < n; ++k) acc += (k % 2 == 1 ? 4.0 : 2.0) * v[k * stride];
    return acc * (b - a) / static_cast<double>(n) / 3.0;
  };
  constexpr std::size_t kMaxIntervals = std::size_t{1} << 14;
  while (true) {
    if (intervals % 4 == 0 || intervals >= kMaxIntervals) {
      const double full = rule(1);
      if (intervals >= kMaxIntervals) return full;
      double mass = 0.0;
      for (double x : v) mass += std::abs(x);
      mass *= std::abs(b - a) / static_cast<double>(intervals);
      const double floor = 1e-14 * magnitude * std::abs(b - a);
      if (std::abs(full - rule(2)) <= 15.0 * std::max(1e-10 * mass, floor)) return full;
    }
    std::vector<double> finer(2 * intervals + 1);
    for (std::size_t k = 0; k <= intervals; ++k) finer[2 * k] = v[k];
    for (std::size_t k = 0; k < intervals; ++k) {
      finer[2 * k + 1] = f(a + (b - a) * static_cast<double>(2 * k + 1) / (2 * intervals));
    }
    v = std::move(finer);
    intervals *= 2;
  }
}

// Argmin over r in [0, 1] of |x + r d|_q (a convex function of r).
double min_norm_parameter(const Vector& x, const Vector& d, const QSpace& space) {
  if (space.q() == 2.0) {
    const double dd = d.squaredNorm();
    return dd == 0.0 ? 0.0 : std::clamp(-x.dot(d) / dd, 0.0, 1.0);
  }
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double m1 = hi - inv_phi * (hi - lo);
  double m2 = lo + inv_phi * (hi - lo);
  double f1 = q_norm(x + m1 * d, space);
  double f2 = q_norm(x + m2 * d, space);
  for (int it = 0; it < 80; ++it) {
    if (f1 <= f2) {
      hi = m2;
      m2 = m1;
      f2 = f1;
      m1 = hi - inv_phi * (hi - lo);
      f1 = q_norm(x + m1 * d, space);
    } else {
      lo = m1;
      m1 = m2;
      f1 = f2;
      m2 = lo + inv_phi * (hi - lo);
      f2 = q_norm(x + m2 * d, space);
    }
  }
  return 0.5 * (lo + hi);
}

Vector random_direction(rng::SequentialRng& gen, std::size_t n, bool sparse) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
  if (sparse) {
    const std::size_t support = 1 + gen.below(std::min<std::size_t>(2, n));
    for (std::size_t k = 0; k < support; ++k) v[static_cast<Eigen::Index>(gen.below(n))] = gen.normal();
    if (v.isZero()) v[0] = 1.0;
  } else {
    for (auto& c : v) c = gen.normal();
  }
  return v;
}

// A sampled pair (x, y) spanning the regimes |y| << |x|, |y| ~ |x|, |y| >> |x|.
std::pair<Vector, Vector> random_pair(rng::SequentialRng& gen, std::size_t n) {
  const bool sparse_x = gen.uniform() < 0.25;
  Vector x = random_direction(gen, n, sparse_x) * std::exp(gen.normal());
  const double mode = gen.uniform();
  Vector y;
  if (mode < 0.4) {
    y = x + random_direction(gen, n, gen.uniform() < 0.3) *
                (x.norm() * std::pow(10.0, -4.0 * gen.uniform()));
  } else if (mode < 0.8) {
    y = random_direction(gen, n, gen.uniform() < 0.3) * std::exp(gen.normal());
  } else {
    y = -x * gen.uniform() + random_direction(gen, n, true) * 0.1 * gen.uniform();
  }
  return {std::move(x), std::move(y)};
}

}  // namespace

QSpace::QSpace(std::size_t dim, double q) : dim_(dim), q_(q) {
  if (dim == 0) throw std::invalid_argument("space dimension must be at least 1");
  if (!(q >= 2.0) || !std::isfinite(q)) {
    throw std::invalid_argument(fmt::format(
        "q = {} rejected: only l^q with 2 <= q < inf (the 2-smooth range) is supported", q));
  }
}

LinearFunctional::LinearFunctional(Vector coeffs, QSpace space)
    : coeffs_(std::move(coeffs)), space_(space) {
  check_dim(coeffs_, space_);
}

LinearFunctional LinearFunctional::zero(const QSpace& space) {
  return {Vector::Zero(static_cast<Eigen::Index>(space.dim())), space};
}

double LinearFunctional::operator()(const Vector& x) const {
  check_dim(x, space_);
  return coeffs_.dot(x);
}

LinearFunctional LinearFunctional::operator-(const LinearFunctional& other) const {
  if (!(space_ == other.space_)) throw std::invalid_argument("functionals live on different spaces");
  return {coeffs_ - other.coeffs_, space_};
}

double lr_norm(const Vector& x, double r) {
  if (r == 2.0) return x.norm();
  if (r == 1.0) return x.lpNorm<1>();
  const double m = x.lpNorm<Eigen::Infinity>();
  if (m == 0.0) return 0.0;
  double acc = 0.0;
  for (double c : x) acc += abs_pow(c / m, r);
  return m * std::pow(acc, 1.0 / r);
}

double q_norm(const Vector& x, const QSpace& space) {
  check_dim(x, space);
  return lr_norm(x, space.q());
}

double dual_norm(const LinearFunctional& f) { return lr_norm(f.coeffs(), f.space().dual_q()); }

LinearFunctional duality_functional(const Vector& x, const QSpace& space) {
  const double n = q_norm(x, space);
  if (n == 0.0) throw GeometryError("duality functional undefined at origin");
  Vector c(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) c[j] = signed_pow(x[j] / n, space.q() - 1.0);
  return {std::move(c), space};
}

double psi(const Vector& x, const QSpace& space, double p) {
  check_power(p);
  return nonneg_pow(q_norm(x, space), p);
}

LinearFunctional psi_prime(const Vector& x, const QSpace& space, double p) {
  check_power(p);
  const double n = q_norm(x, space);
  if (n == 0.0) return LinearFunctional::zero(space);
  Vector c = duality_functional(x, space).coeffs() * (p * nonneg_pow(n, p - 1.0));
  return {std::move(c), space};
}

double psi_prime_apply(const Vector& x, const Vector& h, const QSpace& space, double p) {
  check_power(p);
  check_dim(x, space);
  check_dim(h, space);
  return psi_prime_apply_unchecked(x, h, space.q(), p);
}

double holder_ratio(const Vector& x, const Vector& y, const QSpace& space, double p,
                    double smoothness) {
  check_dim(x, space);
  check_dim(y, space);
  const double gap = q_norm(x - y, space);
  if (gap == 0.0) throw GeometryError("ratio undefined for coincident points");
  const double num = dual_norm(psi_prime(x, space, p) - psi_prime(y, space, p));
  const double den = nonneg_pow(q_norm(x, space) + q_norm(y, space), p - smoothness) *
                     nonneg_pow(gap, smoothness - 1.0);
  return num / den;
}

double smoothness_ratio(const Vector& x, const Vector& y, const QSpace& space, double s) {
  check_dim(x, space);
  check_dim(y, space);
  if (!(s > 1.0 && s <= 2.0)) {
    throw std::invalid_argument(fmt::format("smoothness exponent s = {} outside (1, 2]", s));
  }
  const double ny = q_norm(y, space);
  if (ny == 0.0) throw GeometryError("smoothness ratio undefined for y = 0");
  const double nx = q_norm(x, space);
  if (nx == 0.0) return 2.0;
  if (s == space.q() && is_even_integer(s)) {
    // |a+b|^q + |a-b|^q - 2|a|^q = 2 sum_{k even >= 2} binom(q, k) a^{q-k} b^k,
    // a sum of non-negative terms.
    const int qi = static_cast<int>(s);
    double num = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      double binom = 1.0;
      for (int k = 1; k <= qi; ++k) {
        binom = binom * (qi - k + 1) / k;
        if (k % 2 == 0) num += 2.0 * binom * std::pow(x[j], qi - k) * std::pow(y[j], k);
      }
    }
    return num / std::pow(ny, s);
  }
  // Work with increments |x+h|^s - |x|^s so that small y does not cancel
  // against |x|^s: coordinatewise |a+b|^q - |a|^q, then the outer power.
  const double q = space.q();
  const auto coord = [q](double a, double b) {
    if (q == 2.0) return b * (2.0 * a + b);
    if (a != 0.0 && std::abs(b) < 0.5 * std::abs(a)) return std::pow(std::abs(a), q) * std::expm1(q * std::log1p(b / a));
    return std::pow(std::abs(a + b), q) - std::pow(std::abs(a), q);
  };
  const double nxq = std::pow(nx, q);
  const double nxs = nonneg_pow(nx, s);
  const auto increment = [&](double sign) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) d += coord(x[j], sign * y[j]);
    if (std::abs(d) < 0.5 * nxq) return nxs * std::expm1(s / q * std::log1p(d / nxq));
    return nonneg_pow(q_norm(x + sign * y, space), s) - nxs;
  };
  return (increment(1.0) + increment(-1.0)) / nonneg_pow(ny, s);
}

SmoothnessProfile estimate_smoothness_constant(const QSpace& space, std::uint64_t seed,
                                               std::size_t n_samples) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be at least 1");
  const std::size_t n = space.dim();
  const auto ratio = [&](const Vector& x, const Vector& y) { return smoothness_ratio(x, y, space, 2.0); };

  // The pair (e_1, e_1) is always part of the sample set and realises ratio 2.
  Vector best_x = Vector::Unit(static_cast<Eigen::Index>(n), 0);
  Vector best_y = best_x;
  double best = ratio(best_x, best_y);

  rng::SequentialRng gen(seed, rng::Stream::sampler);
  for (std::size_t i = 1; i < n_samples; ++i) {
    auto [x, y] = random_pair(gen, n);
    if (q_norm(y, space) == 0.0) continue;
    const double r = ratio(x, y);
    if (r > best) {
      best = r;
      best_x = std::move(x);
      best_y = std::move(y);
    }
  }

  // Coordinate hill climbing on (x, y). The ratio is scale free, so fix |x| = 1
  // and keep |y| >= 1e-3 |x| to stay clear of cancellation in the numerator.
  const double scale = q_norm(best_x, space);
  best_x /= scale;
  best_y /= scale;
  best = ratio(best_x, best_y);
  double step = 0.1;
  for (int sweep = 0; sweep < 4000 && step > 1e-9; ++sweep) {
    bool improved = false;
    for (std::size_t k = 0; k < 2 * n; ++k) {
      for (double sign : {1.0, -1.0}) {
        Vector x = best_x;
        Vector y = best_y;
        Vector& target = k < n ? x : y;
        const auto j = static_cast<Eigen::Index>(k % n);
        target[j] += sign * step * std::max(1e-3, std::abs(target[j]));
        const double nx = q_norm(x, space);
        if (nx == 0.0) continue;
        x /= nx;
        y /= nx;
        if (q_norm(y, space) < 1e-3) continue;
        const double r = ratio(x, y);
        if (r > best) {
          best = r;
          best_x = std::move(x);
          best_y = std::move(y);
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }

  SmoothnessProfile profile;
  profile.q = space.q();
  profile.K_hat = best;
  profile.sample_count = n_samples;
  profile.seed = seed;
  profile.max_ratio_witness = {best_x, best_y};
  return profile;
}

double taylor_remainder(const Vector& x, const Vector& y, const QSpace& space, double p,
                        int quad_points) {
  check_power(p);
  check_dim(x, space);
  check_dim(y, space);
  const int nodes = std::max(3, quad_points % 2 == 0 ? quad_points + 1 : quad_points);
  const Vector d = y - x;
  if (d.isZero()) return 0.0;
  const double q = space.q();

  std::vector<double> breaks{0.0, 1.0};
  if (!is_even_integer(q)) {
    // |t|^{q-1} sign(t) is not smooth at t = 0.
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if ((x[j] < 0.0 && y[j] > 0.0) || (x[j] > 0.0 && y[j] < 0.0)) {
        breaks.push_back(x[j] / (x[j] - y[j]));
      }
    }
  }
  const double nx = q_norm(x, space);
  const double ny = q_norm(y, space);
  const double nd = q_norm(d, space);
  // A segment that doubles back towards the origin gets a break at its
  // closest point, and pieces are graded geometrically toward it.
  double closest = -1.0;
  double scale = 1.0;
  if (nx + ny < 2.0 * nd) {
    closest = min_norm_parameter(x, d, space);
    scale = q_norm(x + closest * d, space) / nd;
    breaks.push_back(closest);
  }
  std::sort(breaks.begin(), breaks.end());

  // Rounding in f(r) scales with the derivative terms it subtracts.
  const auto integrate = [&](const auto& f, double base) {
    const double magnitude = std::abs(base) + std::abs(f(1.0) + base);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double a = breaks[k];
      const double b = breaks[k + 1];
      if (!(b > a)) continue;
      if (closest < 0.0) {
        total += simpson(f, a, b, nodes, magnitude);
        continue;
      }
      // The integrand varies on the scale |z_min| / |d| + |r - r_min|.
      const bool at_a = std::abs(a - closest) <= std::abs(b - closest);
      const double len = b - a;
      const double floor_len = scale + std::abs((at_a ? a : b) - closest);
      int levels = 0;
      if (floor_len < len) levels = std::min(40, static_cast<int>(std::ceil(std::log2(len / std::max(floor_len, 1e-300)))));
      const double anchor = at_a ? a : b;
      const double dir = at_a ? 1.0 : -1.0;
      double outer = len;
      for (int l = 0; l < levels; ++l) {
        const double inner = outer / 2.0;
        const double u = anchor + dir * inner;
        const double v = anchor + dir * outer;
        total += dir * simpson(f, u, v, nodes, magnitude);
        outer = inner;
      }
      total += dir * simpson(f, anchor, anchor + dir * outer, nodes, magnitude);
    }
    return total;
  };

  if (q == 2.0) {
    const double xx = x.squaredNorm();
    const double xd = x.dot(d);
    const double dd = d.squaredNorm();
    const double base = p * nonneg_pow(std::sqrt(xx), p - 2.0) * xd;
    const double half = (p - 2.0) / 2.0;
    return integrate([&](double r) {
      const double zz = std::max(0.0, xx + r * (2.0 * xd + r * dd));
      return p * nonneg_pow(zz, half) * (xd + r * dd) - base;
    }, base);
  }

  const double base = psi_prime_apply_unchecked(x, d, q, p);
  Vector z(x.size());
  return integrate([&](double r) {
    z = x + r * d;
    return psi_prime_apply_unchecked(z, d, q, p) - base;
  }, base);
}

double taylor_remainder_direct(const Vector& x, const Vector& y, const QSpace& space, double p) {
  return psi(y, space, p) - psi(x, space, p) - psi_prime_apply(x, y - x, space, p);
}

double two_term_bound(const Vector& x, const Vector& y, const QSpace& space, double p, double C) {
  if (!(C > 0.0)) throw std::invalid_argument("two-term bound needs C > 0");
  const double step = q_norm(y - x, space);
  return C * nonneg_pow(q_norm(x, space), p - 2.0) * step * step + C * nonneg_pow(step, p);
}

RemainderFit fit_two_term_constant(const QSpace& space, double p, std::uint64_t seed,
                                   std::size_t n_pairs, int quad_points) {
  RemainderFit fit;
  rng::SequentialRng gen(seed, rng::Stream::sampler, 1);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto [x, y] = random_pair(gen, space.dim());
    const double bound = two_term_bound(x, y, space, p, 1.0);
    if (bound == 0.0) continue;
    fit.C_hat = std::max(fit.C_hat, std::abs(taylor_remainder(x, y, space, p, quad_points)) / bound);
    ++fit.pairs;
  }
  return fit;
}

double estimate_holder_constant(const QSpace& space, double p, std::uint64_t seed,
                                std::size_t n_pairs) {
  double best = 0.0;
  rng::SequentialRng gen(seed, rng::Stream::sampler, 2);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto [x, y] = random_pair(gen, space.dim());
    if (q_norm(x - y, space) == 0.0) continue;
    best = std::max(best, holder_ratio(x, y, space, p));
  }
  return best;
}

}  // namespace smoothconv
