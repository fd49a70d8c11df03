#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mkh {

/// xoshiro256** seeded through splitmix64. All draws are computed with
/// explicit arithmetic so a given seed yields the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform clamped to [1e-12, 1 - 1e-12].
  double uniform_open() noexcept;
  double normal() noexcept;
  double normal(double mean, double std) noexcept { return mean + std * normal(); }
  /// Standard Gumbel(0,1) draw: -log(-log(u)).
  double gumbel() noexcept;
  bool bernoulli(double p) noexcept;
  /// Uniform integer in the closed range [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) noexcept;

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(0, i - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream; the parent advances by one draw.
  Rng split() noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mkh
