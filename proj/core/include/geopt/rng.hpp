#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace geopt {

/// Deterministic xoshiro256** stream. Uniform draws are generated from raw
/// 64-bit output with fixed arithmetic, so a given seed reproduces the same
/// sequence everywhere; no standard-library distributions are involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() noexcept;

  /// Uniform in {0, ..., bound-1}, unbiased. bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

  /// Uniform in {0, ..., n-1}.
  int next_index(int n) noexcept { return static_cast<int>(next_below(static_cast<std::uint64_t>(n))); }

  /// Uniform in [lo, hi).
  double next_uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_double(); }

  /// Standard normal via the polar method.
  double next_normal() noexcept;

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Pure function of (root, label, index); used to give every experiment
/// cell and engine component its own independent stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index = 0) noexcept;

}  // namespace geopt
