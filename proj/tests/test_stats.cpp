#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smoothconv/stats.hpp"

using namespace smoothconv;

TEST_CASE("batched mean") {
  std::vector<double> v(40);
  std::iota(v.begin(), v.end(), 0.0);
  const auto m = batched_mean(v, 20);
  CHECK(m.mean == doctest::Approx(19.5));
  // Batch means 0.5, 2.5, ..., 38.5: sample sd of 2k over 20 points, divided by sqrt(20).
  double var = 0.0;
  for (int k = 0; k < 20; ++k) var += std::pow(2.0 * k + 0.5 - 19.5, 2);
  var /= 19.0;
  CHECK(m.se == doctest::Approx(std::sqrt(var / 20.0)));
  CHECK(batched_mean(std::vector<double>(40, 3.0)).se == 0.0);
  CHECK_THROWS(batched_mean(std::vector<double>(5, 1.0)));
}

TEST_CASE("batched ratio") {
  std::vector<double> a(100, 2.0), b(100, 4.0);
  const auto r = batched_ratio(a, b, [](double x, double y) { return x / y; });
  CHECK(r.mean == doctest::Approx(0.5));
  CHECK(r.se == 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 1.0 + static_cast<double>(i % 7);
  const auto r2 = batched_ratio(a, b, [](double x, double y) { return x / y; });
  CHECK(r2.mean == doctest::Approx(std::accumulate(a.begin(), a.end(), 0.0) / 400.0));
  CHECK(r2.se > 0.0);
}

TEST_CASE("quantiles interpolate") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 5.0);
  CHECK(quantile(v, 0.5) == 3.0);
  CHECK(quantile(v, 0.625) == doctest::Approx(3.5));
  CHECK(max_value(v) == 5.0);
  CHECK_THROWS(quantile({}, 0.5));
}

TEST_CASE("parallel_for writes the same slots for any worker count") {
  for (unsigned workers : {1u, 2u, 3u, 8u}) {
    std::vector<double> out(1000);
    parallel_for(out.size(), workers, [&](std::size_t i) { out[i] = std::sin(static_cast<double>(i)); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == std::sin(static_cast<double>(i)));
  }
  std::atomic<int> hits{0};
  parallel_for(0, 4, [&](std::size_t) { ++hits; });
  CHECK(hits == 0);
}

TEST_CASE("parallel_for rethrows") {
  std::atomic<int> ran{0};
  CHECK_THROWS_WITH_AS(parallel_for(100, 4,
                                    [&](std::size_t i) {
                                      ++ran;
                                      if (i == 17) throw std::runtime_error("boom");
                                    }),
                       "boom", std::runtime_error);
  CHECK(ran > 0);
}
