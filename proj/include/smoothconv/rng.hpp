#ifndef SMOOTHCONV_RNG_HPP
#define SMOOTHCONV_RNG_HPP

#include <array>
#include <cstdint>

namespace smoothconv::rng {

/// Philox4x32-10 block function (ten rounds).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Stream tags separating the independent uses of a master seed.
enum class Stream : std::uint64_t {
  brownian = 1,
  gamma_norm = 2,
  integrand = 3,
  sampler = 4,
  certification = 5,
  pilot = 6,
};

/**
 * Counter-based Gaussian source. Every draw is a pure function of
 * (seed, stream, a, b, c), so any trajectory/step/coordinate can be
 * regenerated independently of evaluation order.
 */
class CounterNormal {
 public:
  CounterNormal(std::uint64_t seed, Stream stream) noexcept;

  /// Two independent N(0,1) variates addressed by (a, b, c).
  std::array<double, 2> pair(std::uint64_t a, std::uint32_t b, std::uint32_t c) const noexcept;
  std::array<double, 2> uniform_pair(std::uint64_t a, std::uint32_t b,
                                     std::uint32_t c) const noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
};

/// Sequential convenience wrapper over CounterNormal for samplers.
class SequentialRng {
 public:
  SequentialRng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept;

  double normal() noexcept;
  double uniform() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  CounterNormal source_;
  std::uint64_t index_;
  std::uint32_t counter_ = 0;
  std::array<double, 2> normals_{};
  std::array<double, 2> uniforms_{};
  int normals_left_ = 0;
  int uniforms_left_ = 0;
};

}  // namespace smoothconv::rng

#endif  // SMOOTHCONV_RNG_HPP
