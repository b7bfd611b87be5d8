#ifndef SMOOTHCONV_GEOMETRY_HPP
#define SMOOTHCONV_GEOMETRY_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace smoothconv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for violated preconditions on the geometric primitives
/// (origin of the duality map, coincident points of a ratio, ...).
class GeometryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/**
 * The finite-dimensional Banach space (R^n, |.|_q).
 *
 * Only q >= 2 is admitted: these spaces are 2-smooth, which is what every
 * estimate downstream relies on.
 */
class QSpace {
 public:
  QSpace(std::size_t dim, double q);

  std::size_t dim() const noexcept { return dim_; }
  double q() const noexcept { return q_; }
  /// Conjugate exponent q' = q / (q - 1) of the dual space.
  double dual_q() const noexcept { return q_ / (q_ - 1.0); }

  bool operator==(const QSpace&) const = default;

 private:
  std::size_t dim_;
  double q_;
};

/// An element of the dual space, stored by its coefficient vector.
class LinearFunctional {
 public:
  LinearFunctional(Vector coeffs, QSpace space);

  static LinearFunctional zero(const QSpace& space);

  const Vector& coeffs() const noexcept { return coeffs_; }
  const QSpace& space() const noexcept { return space_; }

  double operator()(const Vector& x) const;
  LinearFunctional operator-(const LinearFunctional& other) const;

 private:
  Vector coeffs_;
  QSpace space_;
};

struct SmoothnessProfile {
  double q = 2.0;
  double K_hat = 0.0;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  std::pair<Vector, Vector> max_ratio_witness;
};

/// l^r norm of a coefficient vector for a general exponent r >= 1.
double lr_norm(const Vector& x, double r);

double q_norm(const Vector& x, const QSpace& space);
double dual_norm(const LinearFunctional& f);

/// The Frechet derivative f_x of the norm at x != 0: the unit dual vector
/// with f_x(x) = |x|.
LinearFunctional duality_functional(const Vector& x, const QSpace& space);

double psi(const Vector& x, const QSpace& space, double p);

/// Derivative of psi_p(x) = |x|^p, equal to p|x|^{p-1} f_x and to the zero
/// functional at the origin.
LinearFunctional psi_prime(const Vector& x, const QSpace& space, double p);

/// psi_p'(x)(h) without materialising the functional.
double psi_prime_apply(const Vector& x, const Vector& h, const QSpace& space, double p);

/**
 * Empirical Holder constant of psi_p':
 *
 *   |psi'(x) - psi'(y)|_* / ((|x| + |y|)^{p-s} |x - y|^{s-1})
 *
 * where s is the smoothness exponent of the space (2 for every l^q, q >= 2).
 */
double holder_ratio(const Vector& x, const Vector& y, const QSpace& space, double p,
                    double smoothness = 2.0);

/// (|x+y|^s + |x-y|^s - 2|x|^s) / |y|^s; bounded by K when the space is s-smooth.
double smoothness_ratio(const Vector& x, const Vector& y, const QSpace& space, double s);

SmoothnessProfile estimate_smoothness_constant(const QSpace& space, std::uint64_t seed,
                                               std::size_t n_samples);

/**
 * First-order Taylor remainder
 *
 *   R(x, y) = int_0^1 [psi'(x + r(y-x)) - psi'(x)](y - x) dr
 *
 * by composite Simpson. The segment is split where a coordinate changes sign
 * and, when the segment passes close to the origin, at the point of minimal
 * norm (pieces are graded toward it). Every piece starts with `quad_points`
 * nodes (rounded up to odd) and is refined by doubling until the Simpson
 * rule on every other node agrees to 1e-10 relative.
 */
double taylor_remainder(const Vector& x, const Vector& y, const QSpace& space, double p,
                        int quad_points = 257);

/// Closed form psi(y) - psi(x) - psi'(x)(y - x) of the same quantity.
double taylor_remainder_direct(const Vector& x, const Vector& y, const QSpace& space, double p);

/// C|x|^{p-2}|y-x|^2 + C|y-x|^p, the two-term majorant of |R(x, y)|.
double two_term_bound(const Vector& x, const Vector& y, const QSpace& space, double p, double C);

/// Smallest C with |R(x_i, y_i)| <= two_term_bound(x_i, y_i, p, C) for every sampled
/// pair (the maximum of the ratios). Pairs with vanishing majorant are skipped.
struct RemainderFit {
  double C_hat = 0.0;
  std::size_t pairs = 0;
};
RemainderFit fit_two_term_constant(const QSpace& space, double p, std::uint64_t seed,
                                   std::size_t n_pairs, int quad_points = 257);

/// Largest holder_ratio seen over sampled pairs.
double estimate_holder_constant(const QSpace& space, double p, std::uint64_t seed,
                                std::size_t n_pairs);

}  // namespace smoothconv

#endif  // SMOOTHCONV_GEOMETRY_HPP
