#include "smoothconv/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace smoothconv {

namespace {

std::vector<double> batch_means(const std::vector<double>& values, std::size_t batches) {
  if (batches < 2) throw std::invalid_argument("need at least two batches");
  if (values.size() < batches) {
    throw std::invalid_argument(
        fmt::format("{} values cannot fill {} batches", values.size(), batches));
  }
  std::vector<double> means(batches, 0.0);
  const std::size_t n = values.size();
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * n / batches;
    const std::size_t hi = (b + 1) * n / batches;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += values[i];
    means[b] = s / static_cast<double>(hi - lo);
  }
  return means;
}

double spread_se(const std::vector<double>& xs) {
  const double k = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= k;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (k - 1.0) / k);
}

double plain_mean(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

MeanSe batched_mean(const std::vector<double>& values, std::size_t batches) {
  const auto means = batch_means(values, batches);
  return {plain_mean(values), spread_se(means)};
}

MeanSe batched_ratio(const std::vector<double>& a, const std::vector<double>& b,
                     const std::function<double(double, double)>& f, std::size_t batches) {
  if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
  const auto ma = batch_means(a, batches);
  const auto mb = batch_means(b, batches);
  std::vector<double> fs(batches);
  for (std::size_t i = 0; i < batches; ++i) fs[i] = f(ma[i], mb[i]);
  return {f(plain_mean(a), plain_mean(b)), spread_se(fs)};
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double max_value(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("maximum of an empty sample");
  return *std::max_element(values.begin(), values.end());
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
  workers = std::max(1u, workers);
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(run);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace smoothconv
