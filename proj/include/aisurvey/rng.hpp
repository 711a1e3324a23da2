#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace aisurvey {

// Portable deterministic generator: xoshiro256** seeded through splitmix64.
// Every derived quantity below is defined bit-for-bit so fold plans and
// synthetic data replicate across platforms and standard libraries:
//   uniform()   = (next() >> 11) * 2^-53
//   below(n)    = Lemire-style rejection on next(), unbiased
//   normal()    = Box-Muller on two uniform() draws (cosine branch only)
//   shuffle()   = Fisher-Yates from the back, j = below(i + 1)
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

// Sub-seed for a named component, e.g. derive_seed(run_seed, "fold-plan").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

}  // namespace aisurvey
