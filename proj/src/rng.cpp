#include "smoothconv/rng.hpp"

#include <cmath>
#include <numbers>

namespace smoothconv::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

// 53-bit uniform in [0, 1) from two 32-bit words.
inline double to_unit(std::uint32_t a, std::uint32_t b) {
  return (static_cast<double>(a >> 5) * 67108864.0 + static_cast<double>(b >> 6)) *
         (1.0 / 9007199254740992.0);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

CounterNormal::CounterNormal(std::uint64_t seed, Stream stream) noexcept {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<double, 2> CounterNormal::uniform_pair(std::uint64_t a, std::uint32_t b,
                                                  std::uint32_t c) const noexcept {
  const auto w = philox4x32(
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, c}, key_);
  return {to_unit(w[0], w[1]), to_unit(w[2], w[3])};
}

std::array<double, 2> CounterNormal::pair(std::uint64_t a, std::uint32_t b,
                                          std::uint32_t c) const noexcept {
  const auto u = uniform_pair(a, b, c);
  // Box-Muller; 1 - u lies in (0, 1].
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u[0]));
  const double angle = 2.0 * std::numbers::pi * u[1];
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

SequentialRng::SequentialRng(std::uint64_t seed, Stream stream, std::uint64_t index) noexcept
    : source_(seed, stream), index_(index) {}

double SequentialRng::normal() noexcept {
  if (normals_left_ == 0) {
    normals_ = source_.pair(index_, counter_++, 0);
    normals_left_ = 2;
  }
  return normals_[2 - normals_left_--];
}

double SequentialRng::uniform() noexcept {
  if (uniforms_left_ == 0) {
    uniforms_ = source_.uniform_pair(index_, counter_++, 1);
    uniforms_left_ = 2;
  }
  return uniforms_[2 - uniforms_left_--];
}

std::uint64_t SequentialRng::below(std::uint64_t n) noexcept {
  const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  return k < n ? k : n - 1;
}

}  // namespace smoothconv::rng
