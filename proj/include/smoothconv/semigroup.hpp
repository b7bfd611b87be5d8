#ifndef SMOOTHCONV_SEMIGROUP_HPP
#define SMOOTHCONV_SEMIGROUP_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "smoothconv/geometry.hpp"

namespace smoothconv {

/// Absolute slack used by every contraction certificate.
inline constexpr double kCertificateTolerance = 1e-10;

struct Certificate {
  bool certified = false;
  bool by_construction = false;
  std::size_t samples = 0;
  /// Largest normalised dissipativity margin psi_2'(x)(Ax), |x| = 1.
  double worst_margin = 0.0;
  /// Largest observed |e^{tA}x| / |x| - 1.
  double worst_growth = 0.0;
};

/// Thrown when a matrix fails the contraction certificate. Carries the
/// violating sample; `t` is 0 for a failed dissipativity check.
class CertificationError : public std::runtime_error {
 public:
  CertificationError(const std::string& what, Vector witness, double t, double margin)
      : std::runtime_error(what), witness_(std::move(witness)), t_(t), margin_(margin) {}

  const Vector& witness() const noexcept { return witness_; }
  double t() const noexcept { return t_; }
  double margin() const noexcept { return margin_; }

 private:
  Vector witness_;
  double t_;
  double margin_;
};

struct SemigroupOperator {
  Matrix matrix;
  double t = 0.0;
};

/**
 * Generator A of a contraction semigroup on (R^n, |.|_q).
 *
 * Immutable once built. Copies share a memo of e^{tA} keyed by t, which
 * tolerates concurrent readers and a single inserting writer at a time.
 */
class Generator {
 public:
  const Matrix& matrix() const noexcept { return matrix_; }
  const QSpace& space() const noexcept { return space_; }
  const Certificate& certificate() const noexcept { return certificate_; }
  bool is_diagonal() const noexcept { return diagonal_; }
  bool is_zero() const { return matrix_.isZero(0.0); }

  /// e^{tA}, memoised.
  const Matrix& exp(double t) const;

 private:
  friend Generator diagonal_generator(const std::vector<double>&, const QSpace&);
  friend Generator general_generator(Matrix, const QSpace&, std::size_t,
                                     const std::vector<double>&, std::uint64_t);

  struct ExpCache {
    std::shared_mutex mutex;
    std::map<double, Matrix> entries;
  };

  Generator(Matrix matrix, QSpace space, bool diagonal);

  Matrix matrix_;
  QSpace space_;
  bool diagonal_;
  Certificate certificate_;
  std::shared_ptr<ExpCache> cache_;
};

/// A = diag(lambdas), all lambdas <= 0: a contraction on every l^q.
Generator diagonal_generator(const std::vector<double>& lambdas, const QSpace& space);

/// Certifies a dense matrix by sampling the dissipativity margin and the
/// growth of |e^{tA}x| at `cert_times`. Throws CertificationError on failure.
Generator general_generator(Matrix matrix, const QSpace& space, std::size_t cert_samples,
                            const std::vector<double>& cert_times, std::uint64_t seed);

/// Matrix exponential by scaling and squaring with the [13/13] Pade approximant.
Matrix expm(const Matrix& a);

SemigroupOperator exp_at(const Generator& a, double t);

/// m (mI - A)^{-1}.
Matrix yosida_resolvent(const Generator& a, int m);

/// psi_p'(x)(Ax); non-positive for contraction generators.
double dissipativity_margin(const Generator& a, const Vector& x, double p);

struct OperatorNormBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/**
 * Bounds on the l^q -> l^q operator norm. Exact (SVD) for q = 2; otherwise the
 * lower bound comes from the nonlinear power iteration for l^q norms and the
 * upper bound is the interpolation estimate |M|_1^{1/q} |M|_inf^{1-1/q}.
 */
OperatorNormBounds operator_norm_bounds(const Matrix& m, const QSpace& space,
                                        std::uint64_t seed = 0x0b0d, int restarts = 8);

}  // namespace smoothconv

#endif  // SMOOTHCONV_SEMIGROUP_HPP
