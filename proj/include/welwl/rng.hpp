#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace welwl {

namespace detail {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream based on splitmix64.
///
/// Every source of randomness in the library flows from a single 64-bit seed
/// through named substreams (experiment -> trial -> component), so adding
/// trials to an experiment never perturbs the draws of earlier trials. The
/// generator is self-contained: identical seeds give identical draws across
/// compilers and standard libraries.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : state_(detail::splitmix64_mix(seed + 0x9E3779B97F4A7C15ull)) {}

  /// Child stream keyed by a name; independent of draws taken from *this.
  RngStream substream(std::string_view name) const {
    return RngStream(detail::splitmix64_mix(state_) ^ detail::fnv1a64(name));
  }

  /// Child stream keyed by an index (trial number, layer number, ...).
  RngStream substream(std::uint64_t index) const {
    return RngStream(detail::splitmix64_mix(state_ ^ (0xA24BAED4963EE407ull + index)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::splitmix64_mix(state_);
  }

  /// Uniform draw in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in (0, 1]; safe as a logarithm argument.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard Gaussian via Box-Muller. Two uniforms per draw.
  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased draw in [0, bound) by rejection.
  std::uint64_t bounded(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  std::vector<double> gaussian_vector(std::size_t count) {
    std::vector<double> out(count);
    for (double& v : out) v = gaussian();
    return out;
  }

private:
  std::uint64_t state_;
};

}  // namespace welwl
