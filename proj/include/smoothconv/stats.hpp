#ifndef SMOOTHCONV_STATS_HPP
#define SMOOTHCONV_STATS_HPP

#include <cstddef>
#include <functional>
#include <vector>

namespace smoothconv {

/// Batches used for every reported standard error.
inline constexpr std::size_t kBatches = 20;

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/**
 * Mean of per-trajectory values with the standard error taken from the
 * spread of `batches` contiguous batch means. Needs at least `batches` values.
 */
MeanSe batched_mean(const std::vector<double>& values, std::size_t batches = kBatches);

/// Batched statistics of f(mean(a), mean(b)); the SE is the batch spread of
/// f applied to batch means (a jackknife-free delta estimate).
MeanSe batched_ratio(const std::vector<double>& a, const std::vector<double>& b,
                     const std::function<double(double, double)>& f, std::size_t batches = kBatches);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double prob);

double max_value(const std::vector<double>& values);

/**
 * Runs body(i) for i in [0, n) on up to `workers` threads. Iterations must
 * write to disjoint slots; results do not depend on the worker count. The
 * first exception thrown by any iteration is rethrown after all threads stop.
 */
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace smoothconv

#endif  // SMOOTHCONV_STATS_HPP
