#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "smoothconv/geometry.hpp"

using namespace smoothconv;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> nd;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& c : v) c = nd(gen);
  return v;
}

}  // namespace

TEST_CASE("norms on small vectors") {
  CHECK(q_norm(vec({3, 4}), QSpace(2, 2.0)) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(q_norm(vec({1, 1}), QSpace(2, 3.0)) == doctest::Approx(std::cbrt(2.0)).epsilon(1e-15));
  CHECK(q_norm(vec({-2, 0, 0}), QSpace(3, 7.0)) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(q_norm(Vector::Zero(4), QSpace(4, 3.0)) == 0.0);
  // Large entries must not overflow in the power sum.
  CHECK(q_norm(vec({1e200, 1e200}), QSpace(2, 4.0)) == doctest::Approx(1e200 * std::pow(2.0, 0.25)));
}

TEST_CASE("only the 2-smooth range q >= 2 is admitted") {
  CHECK_THROWS_WITH_AS(QSpace(2, 1.5), doctest::Contains("2-smooth"), std::invalid_argument);
  CHECK_THROWS_AS(QSpace(2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(QSpace(2, INFINITY), std::invalid_argument);
  CHECK_THROWS_AS(QSpace(0, 2.0), std::invalid_argument);
  CHECK_NOTHROW(QSpace(1, 2.0));
}

TEST_CASE("duality functional closed forms") {
  SUBCASE("Hilbert case is x / |x|") {
    const QSpace h(2, 2.0);
    const auto f = duality_functional(vec({3, 4}), h);
    CHECK(f.coeffs()[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(f.coeffs()[1] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("l^4 at (1, -1)") {
    // |x|_4 = 2^{1/4}; coefficients sign(x_j) (|x_j| / |x|)^3.
    const QSpace s(2, 4.0);
    const auto f = duality_functional(vec({1, -1}), s);
    const double c = std::pow(2.0, -0.75);
    CHECK(f.coeffs()[0] == doctest::Approx(c).epsilon(1e-14));
    CHECK(f.coeffs()[1] == doctest::Approx(-c).epsilon(1e-14));
  }
  SUBCASE("undefined at the origin") {
    CHECK_THROWS_AS(duality_functional(Vector::Zero(3), QSpace(3, 3.0)), GeometryError);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(duality_functional(vec({1, 2}), QSpace(3, 3.0)), std::invalid_argument);
  }
}

TEST_CASE("property: duality invariants over random points") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double q : {2.0, 2.5, 3.0, 4.0, 7.0}) {
    for (int k = 0; k < 2000; ++k) {
      const QSpace s(1 + gen() % 6, q);
      const Vector x = random_vector(gen, s.dim()) * std::exp(3.0 * unif(gen) - 1.5);
      const auto f = duality_functional(x, s);
      CHECK(std::abs(f(x) - q_norm(x, s)) <= 1e-12 * q_norm(x, s));
      CHECK(std::abs(dual_norm(f) - 1.0) <= 1e-12);
      const double lambda = 0.01 + 10.0 * unif(gen);
      CHECK((duality_functional(lambda * x, s).coeffs() - f.coeffs()).cwiseAbs().maxCoeff() <= 1e-12);
      // Norming: |f(y)| <= |y| for any y.
      const Vector y = random_vector(gen, s.dim());
      CHECK(std::abs(f(y)) <= q_norm(y, s) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("psi and its derivative") {
  const QSpace h(2, 2.0);
  SUBCASE("psi_2' in Hilbert space is 2x") {
    const Vector x = vec({1.5, -2.0});
    const auto d = psi_prime(x, h, 2.0);
    CHECK(d.coeffs()[0] == doctest::Approx(3.0));
    CHECK(d.coeffs()[1] == doctest::Approx(-4.0));
  }
  SUBCASE("zero functional at the origin") {
    const auto d = psi_prime(Vector::Zero(3), QSpace(3, 3.0), 3.0);
    CHECK(d.coeffs().isZero());
  }
  SUBCASE("p < 2 is outside the Ito range") {
    CHECK_THROWS_AS(psi(vec({1, 1}), h, 1.5), std::invalid_argument);
  }
  SUBCASE("property: matches central finite differences") {
    std::mt19937_64 gen(12);
    for (double q : {2.0, 3.0, 4.0, 5.5}) {
      for (double p : {2.0, 2.5, 3.0, 4.0}) {
        for (int k = 0; k < 200; ++k) {
          const QSpace s(1 + gen() % 5, q);
          const Vector x = random_vector(gen, s.dim());
          const Vector v = random_vector(gen, s.dim());
          const double hstep = 1e-4 * q_norm(x, s) / q_norm(v, s);
          const double fd = (psi(x + hstep * v, s, p) - psi(x - hstep * v, s, p)) / (2.0 * hstep);
          const auto d = psi_prime(x, s, p);
          CHECK(std::abs(fd - d(v)) <= 1e-6 * dual_norm(d) * q_norm(v, s));
          CHECK(psi_prime_apply(x, v, s, p) == doctest::Approx(d(v)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("Hilbert anchors of the two ratios") {
  const QSpace h(3, 2.0);
  std::mt19937_64 gen(13);
  for (int k = 0; k < 1000; ++k) {
    const Vector x = random_vector(gen, 3);
    const Vector y = random_vector(gen, 3);
    CHECK(smoothness_ratio(x, y, h, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(holder_ratio(x, y, h, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(holder_ratio(vec({1, 2, 3}), vec({1, 2, 3}), h, 2.0), GeometryError);
  CHECK_THROWS_AS(smoothness_ratio(vec({1, 2, 3}), Vector::Zero(3), h, 2.0), GeometryError);
}

TEST_CASE("property: Holder ratio of psi_p' stays bounded") {
  // psi_p' is (p-1)-homogeneous, so the ratio is scale free; bounded over samples.
  for (double q : {2.0, 3.0, 4.0}) {
    for (double p : {2.0, 3.0, 4.0}) {
      const QSpace s(3, q);
      const double c1 = estimate_holder_constant(s, p, 5, 3000);
      const double c2 = estimate_holder_constant(s, p, 6, 3000);
      CHECK(std::isfinite(c1));
      CHECK(c1 > 0.0);
      CHECK(c1 < 50.0);
      CHECK(c2 < 2.0 * c1 + 1.0);
    }
  }
}

TEST_CASE("smoothness constant estimate") {
  SUBCASE("q = 2: the parallelogram law gives K = 2") {
    const auto prof = estimate_smoothness_constant(QSpace(3, 2.0), 1, 2000);
    CHECK(prof.K_hat == doctest::Approx(2.0).epsilon(1e-10));
  }
  SUBCASE("sharp value 2(q-1) is approached and never exceeded") {
    for (double q : {3.0, 4.0, 6.0}) {
      const QSpace s(3, q);
      const auto prof = estimate_smoothness_constant(s, 7, 5000);
      CHECK(prof.K_hat <= 2.0 * (q - 1.0) + 1e-9);
      CHECK(prof.K_hat >= 0.95 * 2.0 * (q - 1.0));
      // The witness reproduces the reported value.
      CHECK(smoothness_ratio(prof.max_ratio_witness.first, prof.max_ratio_witness.second, s, 2.0) ==
            doctest::Approx(prof.K_hat).epsilon(1e-14));
    }
  }
  SUBCASE("n = 1 has K = 2 for every q") {
    CHECK(estimate_smoothness_constant(QSpace(1, 5.0), 3, 500).K_hat == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("monotone in q and reproducible") {
    const double k3 = estimate_smoothness_constant(QSpace(2, 3.0), 9, 3000).K_hat;
    const double k4 = estimate_smoothness_constant(QSpace(2, 4.0), 9, 3000).K_hat;
    CHECK(k3 < k4);
    CHECK(estimate_smoothness_constant(QSpace(2, 3.0), 9, 3000).K_hat == k3);
  }
}

TEST_CASE("Taylor remainder") {
  const QSpace h(2, 2.0);
  SUBCASE("p = 2, q = 2 gives |y - x|^2") {
    std::mt19937_64 gen(14);
    for (int k = 0; k < 200; ++k) {
      const Vector x = random_vector(gen, 2);
      const Vector y = random_vector(gen, 2);
      CHECK(taylor_remainder(x, y, h, 2.0) == doctest::Approx((y - x).squaredNorm()).epsilon(1e-12));
    }
  }
  SUBCASE("p = 3, q = 2 from (1, 0) to (0, 1)") {
    // psi(y) - psi(x) - psi'(x)(y - x) = 1 - 1 - 3 <(1,0), (-1,1)> = 3.
    CHECK(std::abs(taylor_remainder(vec({1, 0}), vec({0, 1}), h, 3.0) - 3.0) <= 1e-9);
  }
  SUBCASE("segment through the origin") {
    for (double q : {2.0, 3.0, 4.0}) {
      const QSpace s(2, q);
      const Vector x = vec({1.0, -0.5});
      const double direct = taylor_remainder_direct(x, -x, s, 2.5);
      CHECK(std::abs(taylor_remainder(x, -x, s, 2.5) - direct) <= 1e-9 * (1.0 + 2.0 * psi(x, s, 2.5)));
    }
  }
  SUBCASE("property: telescoping identity") {
    std::mt19937_64 gen(15);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double q : {2.0, 3.0, 4.0, 5.0}) {
      for (double p : {2.0, 2.5, 3.0, 4.0}) {
        const QSpace s(3, q);
        for (int k = 0; k < 100; ++k) {
          const Vector x = random_vector(gen, 3);
          const Vector y = unif(gen) < 0.5 ? Vector(random_vector(gen, 3)) : Vector(x + 0.01 * random_vector(gen, 3));
          const double r = taylor_remainder(x, y, s, p);
          const double scale = 1.0 + psi(x, s, p) + psi(y, s, p);
          CHECK(std::abs(r - taylor_remainder_direct(x, y, s, p)) <= 1e-9 * scale);
          // Convexity of psi makes the remainder non-negative.
          CHECK(r >= -1e-12 * scale);
        }
      }
    }
  }
  SUBCASE("even quad_points are rounded up") {
    CHECK(taylor_remainder(vec({1, 2}), vec({2, -1}), QSpace(2, 3.0), 3.0, 4) ==
          taylor_remainder(vec({1, 2}), vec({2, -1}), QSpace(2, 3.0), 3.0, 5));
  }
}

TEST_CASE("two-term bound with a fitted constant") {
  for (double q : {2.0, 3.0}) {
    for (double p : {2.0, 3.0, 4.0}) {
      const QSpace s(2, q);
      const auto fit = fit_two_term_constant(s, p, 21, 4000);
      CHECK(fit.pairs > 3000);
      CHECK(fit.C_hat > 0.0);
      CHECK(std::isfinite(fit.C_hat));
      std::mt19937_64 gen(16);
      for (int k = 0; k < 500; ++k) {
        const Vector x = random_vector(gen, 2);
        const Vector y = random_vector(gen, 2);
        CHECK(std::abs(taylor_remainder(x, y, s, p)) <= two_term_bound(x, y, s, p, fit.C_hat) * (1.0 + 1e-9));
      }
    }
  }
  CHECK_THROWS_AS(two_term_bound(vec({1, 0}), vec({0, 1}), QSpace(2, 2.0), 2.0, 0.0), std::invalid_argument);
}
