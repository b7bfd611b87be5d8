#include "smoothconv/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <fmt/format.h>

#include "smoothconv/rng.hpp"

namespace smoothconv {

namespace {

// Dual map of l^{q'} onto the unit sphere of l^q: the x with |x|_q = 1 and f(x) = |f|_{q'}.
Vector dual_to_primal(const Vector& f, double q) {
  const double qd = q / (q - 1.0);
  const double n = lr_norm(f, qd);
  Vector x(f.size());
  for (Eigen::Index j = 0; j < f.size(); ++j) {
    const double v = std::pow(std::abs(f[j]) / n, qd - 1.0);
    x[j] = f[j] < 0.0 ? -v : v;
  }
  return x;
}

std::vector<Vector> certification_samples(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<Vector> out;
  const auto dim = static_cast<Eigen::Index>(n);
  for (Eigen::Index j = 0; j < dim; ++j) {
    out.push_back(Vector::Unit(dim, j));
    out.push_back(-Vector::Unit(dim, j));
  }
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = i + 1; j < dim; ++j) {
      out.push_back(Vector::Unit(dim, i) + Vector::Unit(dim, j));
      out.push_back(Vector::Unit(dim, i) - Vector::Unit(dim, j));
    }
  }
  rng::SequentialRng gen(seed, rng::Stream::certification);
  while (out.size() < count) {
    Vector x(dim);
    if (gen.uniform() < 0.3) {
      x.setZero();
      x[static_cast<Eigen::Index>(gen.below(n))] = gen.normal();
      x[static_cast<Eigen::Index>(gen.below(n))] += gen.normal();
    } else {
      for (auto& c : x) c = gen.normal();
    }
    if (!x.isZero()) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

Generator::Generator(Matrix matrix, QSpace space, bool diagonal)
    : matrix_(std::move(matrix)), space_(space), diagonal_(diagonal),
      cache_(std::make_shared<ExpCache>()) {
  if (matrix_.rows() != matrix_.cols() ||
      static_cast<std::size_t>(matrix_.rows()) != space_.dim()) {
    throw std::invalid_argument(fmt::format("generator must be {0}x{0}, got {1}x{2}", space_.dim(),
                                            matrix_.rows(), matrix_.cols()));
  }
}

const Matrix& Generator::exp(double t) const {
  if (!(t >= 0.0)) throw std::invalid_argument(fmt::format("semigroup evaluated at t = {} < 0", t));
  {
    std::shared_lock lock(cache_->mutex);
    if (auto it = cache_->entries.find(t); it != cache_->entries.end()) return it->second;
  }
  Matrix value;
  if (diagonal_) {
    value = (matrix_.diagonal() * t).array().exp().matrix().asDiagonal();
  } else {
    value = expm(matrix_ * t);
  }
  std::unique_lock lock(cache_->mutex);
  // std::map never relocates nodes, so references handed out stay valid.
  return cache_->entries.try_emplace(t, std::move(value)).first->second;
}

Generator diagonal_generator(const std::vector<double>& lambdas, const QSpace& space) {
  if (lambdas.size() != space.dim()) {
    throw std::invalid_argument(fmt::format("expected {} eigenvalues, got {}", space.dim(), lambdas.size()));
  }
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    if (!(lambdas[j] <= 0.0)) {
      throw std::invalid_argument(
          fmt::format("lambda[{}] = {} > 0 does not generate a contraction", j, lambdas[j]));
    }
  }
  Vector diag = Eigen::Map<const Vector>(lambdas.data(), static_cast<Eigen::Index>(lambdas.size()));
  Generator g(Matrix(diag.asDiagonal()), space, true);
  g.certificate_.certified = true;
  g.certificate_.by_construction = true;
  g.certificate_.worst_margin = lambdas.empty() ? 0.0 : *std::max_element(lambdas.begin(), lambdas.end());
  return g;
}

Generator general_generator(Matrix matrix, const QSpace& space, std::size_t cert_samples,
                            const std::vector<double>& cert_times, std::uint64_t seed) {
  Generator g(std::move(matrix), space, false);
  if (g.matrix_.isDiagonal(0.0)) g.diagonal_ = true;
  Certificate cert;
  const auto samples = certification_samples(space.dim(), cert_samples, seed);
  cert.samples = samples.size();
  cert.worst_margin = -std::numeric_limits<double>::infinity();
  for (const Vector& raw : samples) {
    const Vector x = raw / q_norm(raw, space);
    const double margin = dissipativity_margin(g, x, 2.0);
    cert.worst_margin = std::max(cert.worst_margin, margin);
    if (margin > kCertificateTolerance * 2.0) {
      throw CertificationError(
          fmt::format("generator is not dissipative in l^{}: psi'(x)(Ax) = {:.6g} > 0", space.q(), margin),
          x, 0.0, margin);
    }
  }
  for (double t : cert_times) {
    const Matrix& e = g.exp(t);
    for (const Vector& raw : samples) {
      const Vector x = raw / q_norm(raw, space);
      const double growth = q_norm(e * x, space) - 1.0;
      cert.worst_growth = std::max(cert.worst_growth, growth);
      if (growth > kCertificateTolerance) {
        throw CertificationError(
            fmt::format("semigroup expands in l^{} at t = {}: |e^(tA)x| = 1 + {:.6g}", space.q(), t, growth),
            x, t, growth);
      }
    }
  }
  cert.certified = true;
  g.certificate_ = cert;
  return g;
}

Matrix expm(const Matrix& a) {
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;
  const Eigen::Index n = a.rows();
  const double norm1 = n == 0 ? 0.0 : a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix as = a / std::ldexp(1.0, squarings);
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = as * as;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                         b[3] * a2 + b[1] * id);
  const Matrix v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

SemigroupOperator exp_at(const Generator& a, double t) { return {a.exp(t), t}; }

Matrix yosida_resolvent(const Generator& a, int m) {
  if (m < 1) throw std::invalid_argument(fmt::format("Yosida index m = {} must be >= 1", m));
  const Eigen::Index n = a.matrix().rows();
  const Matrix shifted = static_cast<double>(m) * Matrix::Identity(n, n) - a.matrix();
  Eigen::PartialPivLU<Matrix> lu(shifted);
  if (!(lu.rcond() > 1e-14)) {
    throw std::domain_error(fmt::format("mI - A is singular for m = {}", m));
  }
  return static_cast<double>(m) * lu.inverse();
}

double dissipativity_margin(const Generator& a, const Vector& x, double p) {
  if (q_norm(x, a.space()) == 0.0) return 0.0;
  return psi_prime_apply(x, a.matrix() * x, a.space(), p);
}

OperatorNormBounds operator_norm_bounds(const Matrix& m, const QSpace& space, std::uint64_t seed,
                                        int restarts) {
  OperatorNormBounds out;
  if (space.q() == 2.0) {
    Eigen::JacobiSVD<Matrix> svd(m);
    out.lower = out.upper = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    return out;
  }
  const double q = space.q();
  const double col = m.cwiseAbs().colwise().sum().maxCoeff();
  const double row = m.cwiseAbs().rowwise().sum().maxCoeff();
  out.upper = std::pow(col, 1.0 / q) * std::pow(row, 1.0 - 1.0 / q);

  rng::SequentialRng gen(seed, rng::Stream::sampler, 7);
  const auto n = m.cols();
  for (int start = 0; start < restarts + n; ++start) {
    Vector x(n);
    if (start < n) {
      x = Vector::Unit(n, start);
    } else {
      for (auto& c : x) c = gen.normal();
    }
    x /= q_norm(x, space);
    for (int it = 0; it < 60; ++it) {
      const Vector y = m * x;
      const double ny = q_norm(y, space);
      out.lower = std::max(out.lower, ny);
      if (ny == 0.0) break;
      const Vector z = m.transpose() * duality_functional(y, space).coeffs();
      if (z.isZero()) break;
      x = dual_to_primal(z, q);
    }
  }
  return out;
}

}  // namespace smoothconv
