#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace appraisal {

// Run-level seed expansion. Every random consumer draws from its own stream:
//   derive_seed(run_seed, stream, index) = splitmix64(splitmix64(run_seed ^ stream) + index)
// so that per-instance generators (bootstrap member b, Shapley instance i, ...)
// are independent of scheduling order.
namespace seed_stream {
inline constexpr std::uint64_t kSplit = 0x5350'4c49'54ULL;      // "SPLIT"
inline constexpr std::uint64_t kSample = 0x5341'4d50'4c45ULL;   // "SAMPLE"
inline constexpr std::uint64_t kBootstrap = 0x424f'4f54ULL;     // "BOOT"
inline constexpr std::uint64_t kShapley = 0x5348'4150ULL;       // "SHAP"
inline constexpr std::uint64_t kBackground = 0x4247'5244ULL;    // "BGRD"
}  // namespace seed_stream

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(run_seed ^ stream) + index);
}

/// mt19937_64 wrapper with distribution code that gives identical draws on
/// every standard library (std::uniform_int_distribution does not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound), unbiased by rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r < limit);
    return r % bound;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace appraisal
