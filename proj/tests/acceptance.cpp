// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "smoothconv/geometry.hpp"
#include "smoothconv/lab.hpp"
#include "smoothconv/semigroup.hpp"
#include "smoothconv/stats.hpp"
#include "smoothconv/stochastic.hpp"
#include "smoothconv/suite.hpp"

using namespace smoothconv;

namespace {

constexpr std::size_t kN = 10000;

struct Outcome {
  bool pass = true;
  std::string detail;
};

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Vector gaussian_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> nd;
  Vector x(static_cast<Eigen::Index>(n));
  for (auto& c : x) c = nd(gen);
  // Occasionally sparse, so coordinate hyperplanes are exercised.
  if (n > 1 && gen() % 4 == 0) x[static_cast<Eigen::Index>(gen() % n)] = 0.0;
  if (x.isZero()) x[0] = 1.0;
  return x;
}

ExperimentConfig base_config(const std::string& name, ExperimentKind kind, std::size_t n, double q) {
  ExperimentConfig c;
  c.name = name;
  c.base_name = name;
  c.kind = kind;
  c.space = QSpace(n, q);
  c.x0 = Vector::Zero(static_cast<Eigen::Index>(n));
  c.trajectories = kN;
  c.gamma.method = q == 2.0 ? GammaMethod::exact2 : GammaMethod::monte_carlo;
  c.generator = std::make_shared<const Generator>(diagonal_generator(std::vector<double>(n, 0.0), c.space));
  return c;
}

void set_diagonal(ExperimentConfig& c, const std::vector<double>& lambdas) {
  c.generator = std::make_shared<const Generator>(diagonal_generator(lambdas, c.space));
  c.generator_label = "diagonal";
}

// ---------------------------------------------------------------- 1
Outcome criterion_geometry() {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double qs[] = {2.0, 3.0, 4.0};
  double worst_eval = 0.0, worst_dual = 0.0, worst_homog = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const QSpace space(1 + gen() % 8, qs[k % 3]);
    const Vector x = gaussian_vector(gen, space.dim()) * std::exp(2.0 * unif(gen) - 1.0);
    const auto f = duality_functional(x, space);
    const double nx = q_norm(x, space);
    worst_eval = std::max(worst_eval, std::abs(f(x) - nx) / nx);
    worst_dual = std::max(worst_dual, std::abs(dual_norm(f) - 1.0));
    const double lambda = std::exp(4.0 * unif(gen) - 2.0);
    worst_homog = std::max(worst_homog, (duality_functional(lambda * x, space).coeffs() - f.coeffs()).cwiseAbs().maxCoeff());
  }
  double worst_fd = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const QSpace space(1 + gen() % 8, qs[k % 3]);
    const double p = 2.0 + static_cast<double>(gen() % 3);
    const Vector x = gaussian_vector(gen, space.dim());
    const Vector v = gaussian_vector(gen, space.dim());
    const double h = 1e-4 * q_norm(x, space) / q_norm(v, space);
    const double fd = (psi(x + h * v, space, p) - psi(x - h * v, space, p)) / (2.0 * h);
    const auto d = psi_prime(x, space, p);
    const double scale = dual_norm(d) * q_norm(v, space);
    worst_fd = std::max(worst_fd, std::abs(fd - d(v)) / scale);
  }
  Outcome o;
  o.pass = worst_eval <= 1e-12 && worst_dual <= 1e-12 && worst_homog <= 1e-12 && worst_fd <= 1e-6;
  o.detail = fmt::format("|f_x(x)-|x||/|x| {:.2e}, ||f_x|-1| {:.2e}, |f_lx-f_x| {:.2e} (1e5 x); psi' vs FD {:.2e} (1e4)",
                         worst_eval, worst_dual, worst_homog, worst_fd);
  return o;
}

// ---------------------------------------------------------------- 2
Outcome criterion_hilbert_anchors() {
  std::mt19937_64 gen(202);
  double worst_s = 0.0, worst_h = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const QSpace space(1 + gen() % 8, 2.0);
    const Vector x = gaussian_vector(gen, space.dim());
    const Vector y = gaussian_vector(gen, space.dim());
    worst_s = std::max(worst_s, std::abs(smoothness_ratio(x, y, space, 2.0) - 2.0));
    worst_h = std::max(worst_h, std::abs(holder_ratio(x, y, space, 2.0) - 2.0));
  }
  return {worst_s <= 1e-12 && worst_h <= 1e-12,
          fmt::format("max |smoothness_ratio-2| {:.2e}, max |holder_ratio-2| {:.2e} over 1e5 pairs", worst_s, worst_h)};
}

// ---------------------------------------------------------------- 3
Outcome criterion_taylor() {
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_identity = 0.0;
  double worst_bound = 0.0;
  std::string fits;
  for (double q : {2.0, 3.0, 4.0}) {
    for (double p : {2.0, 3.0, 4.0}) {
      const QSpace space(3, q);
      const auto fit = fit_two_term_constant(space, p, 0x7a11, 20000);
      fits += fmt::format(" C({},{})={:.3f}", p, q, fit.C_hat);
      for (int k = 0; k < 10000 / 9 + 1; ++k) {
        const Vector x = gaussian_vector(gen, 3) * std::exp(unif(gen) - 0.5);
        Vector y = unif(gen) < 0.5 ? Vector(gaussian_vector(gen, 3))
                                   : Vector(x + 1e-3 * std::exp(3.0 * unif(gen)) * gaussian_vector(gen, 3));
        const double r = taylor_remainder(x, y, space, p, 257);
        const double direct = psi(y, space, p) - psi(x, space, p) - psi_prime_apply(x, y - x, space, p);
        worst_identity = std::max(worst_identity, std::abs(direct - r) / (1.0 + psi(x, space, p) + psi(y, space, p)));
        worst_bound = std::max(worst_bound, std::abs(r) / two_term_bound(x, y, space, p, fit.C_hat));
      }
    }
  }
  return {worst_identity <= 1e-9 && worst_bound <= 1.0,
          fmt::format("identity defect {:.2e}; max |R|/bound {:.4f} on fresh pairs;{}", worst_identity, worst_bound, fits)};
}

// ---------------------------------------------------------------- 4
Outcome criterion_isometry() {
  const QSpace space(2, 2.0);
  const GridPtr grid = make_grid(TimeGrid::uniform(1.0, 1024));
  const Matrix G = mat({{1.0, 0.5}, {-0.3, 0.8}});
  const auto g = StepProcess::constant(grid, G);
  const auto a = diagonal_generator({0.0, 0.0}, space);
  std::vector<double> terminal(kN);
  parallel_for(kN, 1, [&](std::size_t i) {
    const auto w = sample_noise(grid, 2, 4040, i);
    const Path x = convolve(a, g, w);
    terminal[i] = x.at(x.size() - 1).squaredNorm();
  });
  const auto m = batched_mean(terminal);
  const double oracle = 1.0 * G.squaredNorm();
  return {std::abs(m.mean - oracle) <= 3.0 * m.se,
          fmt::format("E|X_T|^2 = {:.5f} +- {:.5f}, T|g|_F^2 = {:.5f}, ratio {:.4f}", m.mean, m.se, oracle, m.mean / oracle)};
}

// ---------------------------------------------------------------- 5
Outcome criterion_quadratic_variation() {
  auto c = base_config("qv", ExperimentKind::ito_convergence, 2, 2.0);
  c.g.G = mat({{1.0, 0.5}, {-0.3, 0.8}});
  c.p = 2.0;
  c.mesh_exponents = {2, 4, 6, 8, 10};
  const auto r = run_ito_convergence(c);
  const double oracle = c.T * c.g.G.squaredNorm();
  const double finest = r.stat("remainder_mean", 10.0).value;
  double worst_defect = 0.0;
  for (int n : c.mesh_exponents) worst_defect = std::max(worst_defect, r.stat("defect_max", n).value);
  return {std::abs(finest - oracle) <= 0.02 * oracle && worst_defect <= 1e-8,
          fmt::format("mean remainder at 2^-10 = {:.5f} vs T|g|_F^2 = {:.5f} ({:+.3f}%), max defect {:.2e}", finest, oracle,
                      100.0 * (finest - oracle) / oracle, worst_defect)};
}

// ---------------------------------------------------------------- 6
Outcome criterion_ou() {
  const QSpace space(1, 2.0);
  const double T = 1.0;
  const GridPtr grid = make_grid(TimeGrid::uniform(T, 1024));
  const auto a = diagonal_generator({-1.0}, space);
  const auto g = StepProcess::constant(grid, Matrix::Ones(1, 1));
  std::vector<double> terminal(kN);
  parallel_for(kN, 1, [&](std::size_t i) {
    const auto w = sample_noise(grid, 1, 6060, i);
    const Path x = convolve(a, g, w);
    terminal[i] = x.at(x.size() - 1).squaredNorm();
  });
  const auto m = batched_mean(terminal);
  const double oracle = (1.0 - std::exp(-2.0 * T)) / 2.0;
  return {std::abs(m.mean - oracle) <= 3.0 * m.se,
          fmt::format("E X_T^2 = {:.5f} +- {:.5f}, (1-e^-2T)/2 = {:.5f}", m.mean, m.se, oracle)};
}

// ---------------------------------------------------------------- 7
struct MaxSpec {
  std::string name;
  std::vector<double> lambdas;
  Matrix G;
  Recipe recipe;
  double amplitude;
  ConfigRole role;
};

std::vector<MaxSpec> maximal_family() {
  const auto train = ConfigRole::train;
  const auto hold = ConfigRole::holdout;
  return {
      {"bm_scalar", {0.0}, mat({{1.0}}), Recipe::constant, 0.0, train},
      {"bm_rank_one", {0.0, 0.0}, mat({{1.0}, {0.5}}), Recipe::constant, 0.0, train},
      {"bm_isotropic", {0.0, 0.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::constant, 0.0, train},
      {"bm_rotation", {0.0, 0.0}, mat({{1.0, 0.4}, {-0.3, 0.8}}), Recipe::rotation, 0.0, train},
      {"bm_feedback", {0.0, 0.0}, mat({{1.0, 0.0}, {0.0, 0.5}}), Recipe::feedback, 1.0, train},
      {"ou_scalar", {-1.0}, mat({{1.0}}), Recipe::constant, 0.0, train},
      {"ou_stiff", {-0.5, -2.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::constant, 0.0, train},
      {"ou_mixed_rotation", {-1.0, 0.0}, mat({{0.7}, {0.7}}), Recipe::rotation, 0.0, train},
      {"ou_feedback3", {-0.2, -0.2, -0.2}, mat({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Recipe::feedback, 1.0, train},
      {"bm_three", {0.0, 0.0, 0.0}, mat({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}}), Recipe::constant, 0.0, train},
      {"holdout_ou_weak", {-0.3}, mat({{2.0}}), Recipe::constant, 0.0, hold},
      {"holdout_rotation", {-1.0, -1.0}, mat({{0.5, 1.0}, {1.0, -0.2}}), Recipe::rotation, 0.0, hold},
      {"holdout_feedback", {0.0, -0.5}, mat({{1.0}, {-1.0}}), Recipe::feedback, 0.3, hold},
      {"holdout_ou3", {-2.0, -2.0, -2.0}, mat({{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}), Recipe::constant, 0.0, hold},
      {"holdout_bm", {0.0, 0.0}, mat({{1.0, 0.3}, {0.0, 0.5}}), Recipe::constant, 0.0, hold},
  };
}

Outcome criterion_maximal() {
  Outcome o;
  for (double q : {2.0, 3.0, 4.0}) {
    std::vector<ExperimentConfig> configs;
    for (const auto& s : maximal_family()) {
      auto c = base_config(fmt::format("{}_q{}", s.name, q), ExperimentKind::maximal, s.lambdas.size(), q);
      set_diagonal(c, s.lambdas);
      c.g.G = s.G;
      c.g.recipe = s.recipe;
      c.g.amplitude = s.amplitude;
      c.mesh_exponents = {9};
      c.group = fmt::format("maximal_q{}", q);
      c.role = s.role;
      c.seed = 7000 + configs.size();
      if (s.role == ConfigRole::train) c.T_list = {1.0, 2.0, 4.0, 8.0};
      configs.push_back(c);
    }
    std::vector<std::vector<MaximalSample>> samples;
    for (const auto& c : configs) samples.push_back(simulate_maximal(c, {}));
    std::vector<MaximalMember> members;
    for (std::size_t k = 0; k < configs.size(); ++k) members.push_back({&configs[k], &samples[k]});
    o.detail += fmt::format("q={}:", q);
    for (double p : {0.5, 1.0, 2.0, 4.0}) {
      const auto r = fit_maximal_group(configs.front().group, p, members);
      double worst = -1e300;
      for (const auto& ch : r.checks) {
        if (!ch.passed) o.detail += fmt::format(" [failed {} p={}: {}]", ch.name, p, ch.detail);
      }
      for (const auto& s : r.stats) {
        if (s.name.rfind("holdout_gap", 0) == 0) worst = std::max(worst, s.value);
      }
      o.pass = o.pass && r.passed();
      o.detail += fmt::format(" C({})={:.3f}", p, r.stat("c_fit").value);
      if (p == 2.0) o.detail += fmt::format(" T-ratio={:.3f}", r.stat("c_fit_T_ratio").value);
    }
    o.detail += "; ";
  }
  return o;
}

// ---------------------------------------------------------------- 8
Outcome criterion_lenglart() {
  Outcome o;
  struct Case {
    double q;
    std::vector<double> lambdas;
    Matrix G;
    Recipe recipe;
  };
  const std::vector<Case> cases = {
      {2.0, {-1.0, -0.5}, mat({{1.0, 0.3}, {0.0, 0.8}}), Recipe::constant},
      {3.0, {-1.0, -0.5}, mat({{1.0, 0.3}, {0.0, 0.8}}), Recipe::constant},
      {4.0, {0.0, -1.0}, mat({{1.0, 0.0}, {0.5, 0.5}}), Recipe::feedback},
  };
  for (const auto& cs : cases) {
    auto c = base_config(fmt::format("lenglart_q{}", cs.q), ExperimentKind::lenglart, 2, cs.q);
    set_diagonal(c, cs.lambdas);
    c.g.G = cs.G;
    c.g.recipe = cs.recipe;
    c.mesh_exponents = {9};
    c.r_values = {0.25, 0.5, 0.75};
    c.seed = 8080 + static_cast<std::uint64_t>(cs.q);
    try {
      const auto r = run_lenglart(c);
      o.pass = o.pass && r.passed() && r.stat("factor", 0.5).value == 3.0;
      o.detail += fmt::format("q={}: C2={:.3f}", cs.q, r.stat("c2_hat").value);
      for (double rv : c.r_values) {
        o.detail += fmt::format(" r={} {:.3f}<={:.3f}", rv, r.stat("lhs", rv).value, r.stat("rhs", rv).value);
      }
      for (const auto& ch : r.checks) {
        if (!ch.passed) o.detail += fmt::format(" [failed {}: {}]", ch.name, ch.detail);
      }
      o.detail += "; ";
    } catch (const LenglartHypothesisError& e) {
      o.pass = false;
      o.detail += fmt::format("q={}: hypothesis failed for {}; ", cs.q, e.rule());
    }
  }
  o.detail += fmt::format("factor(0.5) = {:.17g}", lenglart_factor(0.5));
  return o;
}

// ---------------------------------------------------------------- 9
Outcome criterion_yosida() {
  auto c = base_config("yosida_dense_q3", ExperimentKind::yosida, 3, 3.0);
  const Matrix S = mat({{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}, {0.2, 0.4, 0.4}});
  const Matrix A = 1.5 * (S - Matrix::Identity(3, 3));
  c.generator = std::make_shared<const Generator>(general_generator(A, c.space, 4000, {0.05, 0.25, 1.0, 4.0}, 99));
  c.generator_label = "dense";
  c.g.G = mat({{1.0, 0.2}, {0.0, 0.7}, {-0.4, 0.5}});
  c.p = 2.0;
  c.mesh_exponents = {9};
  c.m_list = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  c.seed = 9090;
  const auto r = run_yosida(c);
  bool strict = true;
  for (std::size_t k = 0; k + 1 < c.m_list.size(); ++k) {
    strict = strict && r.stat("distance", c.m_list[k + 1]).value < r.stat("distance", c.m_list[k]).value;
  }
  Outcome o{r.passed() && strict, ""};
  double upper = 0.0;
  for (int m : c.m_list) upper = std::max(upper, r.stat("resolvent_norm_upper", m).value);
  o.detail = fmt::format("max resolvent norm bound {:.12f}; distance {:.3e} (m=1) -> {:.3e} (m=256), {:.4f}% of E sup|X|^2; strictly decreasing: {}",
                         upper, r.stat("distance", 1).value, r.stat("distance", 256).value,
                         100.0 * r.stat("distance", 256).value / r.stat("sup_p_mean").value, strict ? "yes" : "no");
  for (const auto& ch : r.checks) {
    if (!ch.passed) o.detail += fmt::format(" [failed {}: {}]", ch.name, ch.detail);
  }
  return o;
}

// ---------------------------------------------------------------- 10
Outcome criterion_remainder() {
  struct RSpec {
    std::string name;
    std::vector<double> lambdas;
    Matrix G;
    Recipe recipe;
    double amplitude;
    ConfigRole role;
  };
  const auto train = ConfigRole::train;
  const auto hold = ConfigRole::holdout;
  const std::vector<RSpec> specs = {
      {"bm_rank_one", {0.0, 0.0}, mat({{1.0}, {0.0}}), Recipe::constant, 0.0, train},
      {"bm_isotropic", {0.0, 0.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::constant, 0.0, train},
      {"bm_feedback", {0.0, 0.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::feedback, 1.0, train},
      {"bm_rotation", {0.0, 0.0}, mat({{1.0, 0.4}, {-0.3, 0.8}}), Recipe::rotation, 0.0, train},
      {"ou_moderate", {-1.0, -0.5}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::constant, 0.0, train},
      {"ou_stiff", {-4.0, -4.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::constant, 0.0, train},
      {"holdout_rank_one", {-0.5, 0.0}, mat({{1.0}, {1.0}}), Recipe::constant, 0.0, hold},
      {"holdout_feedback", {-2.0, -1.0}, mat({{1.0, 0.0}, {0.0, 1.0}}), Recipe::feedback, 0.5, hold},
      {"holdout_bm", {0.0, 0.0}, mat({{1.0, 0.3}, {0.0, 0.5}}), Recipe::constant, 0.0, hold},
  };
  Outcome o;
  for (double q : {2.0, 3.0}) {
    std::vector<ExperimentConfig> configs;
    for (const auto& s : specs) {
      auto c = base_config(fmt::format("{}_q{}", s.name, q), ExperimentKind::remainder_bound, 2, q);
      set_diagonal(c, s.lambdas);
      c.g.G = s.G;
      c.g.recipe = s.recipe;
      c.g.amplitude = s.amplitude;
      c.p = 4.0;
      c.mesh_exponents = {8};
      c.group = fmt::format("remainder_q{}", q);
      c.role = s.role;
      c.seed = 10100 + configs.size();
      for (int k = -6; k <= 0; ++k) c.epsilons.push_back(std::ldexp(1.0, k));
      configs.push_back(c);
    }
    std::vector<RemainderSample> samples;
    for (const auto& c : configs) samples.push_back(simulate_remainder(c, {}));
    std::vector<RemainderMember> members;
    for (std::size_t k = 0; k < configs.size(); ++k) members.push_back({&configs[k], &samples[k]});
    const auto r = fit_remainder_group(configs.front().group, 4.0, members);
    o.pass = o.pass && r.passed();
    if (r.passed()) {
      o.detail += fmt::format("q={}: C={:.4f} C'={:.4f} feasible on {} holdouts; ", q, r.stat("C").value,
                              r.stat("C_prime").value, 3);
    }
    for (const auto& ch : r.checks) {
      if (!ch.passed) o.detail += fmt::format(" [failed {}: {}]", ch.name, ch.detail);
    }
  }
  return o;
}

// ---------------------------------------------------------------- 11
Outcome criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / fmt::format("smoothconv_determinism_{}", ::getpid());
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream log;
  RunManifest m;
  m.config_paths = {SMOOTHCONV_SOURCE_DIR "/configs/suite.json"};
  m.master_seed = 2024;
  m.workers = 2;
  m.out_dir = (root / "a").string();
  const int first = run_suite(m, log);
  m.out_dir = (root / "b").string();
  m.workers = 1;
  const int second = run_suite(m, log);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp(root / "a" / "results.csv");
  const std::string b = slurp(root / "b" / "results.csv");
  const bool same = !a.empty() && a == b;
  fs::remove_all(root);
  return {same && first == 0 && second == 0,
          fmt::format("results.csv {} ({} bytes, workers 2 vs 1); suite exit codes {} and {}",
                      same ? "byte-identical" : "DIFFERS", a.size(), first, second)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "geometry exactness", criterion_geometry},
      {2, "parallelogram and Holder anchors", criterion_hilbert_anchors},
      {3, "Taylor identity and two-term bound", criterion_taylor},
      {4, "Ito isometry oracle", criterion_isometry},
      {5, "quadratic-variation oracle", criterion_quadratic_variation},
      {6, "Ornstein-Uhlenbeck closed form", criterion_ou},
      {7, "maximal inequality and T-independence", criterion_maximal},
      {8, "Lenglart hypothesis and conclusion", criterion_lenglart},
      {9, "Yosida convergence", criterion_yosida},
      {10, "remainder bound feasibility", criterion_remainder},
      {11, "determinism", criterion_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << fmt::format("{} criterion {:>2} ({}): {} [{:.1f}s]", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail,
                             secs)
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria pass", criteria.size() - failures, criteria.size()) << std::endl;
  return failures == 0 ? 0 : 1;
}
