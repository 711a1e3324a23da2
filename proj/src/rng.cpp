#include "aisurvey/rng.hpp"

#include "aisurvey/error.hpp"

#include <cmath>
#include <numbers>

namespace aisurvey {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io-error";
    case ErrorKind::Parse: return "parse-error";
    case ErrorKind::InvalidResponse: return "invalid-response";
    case ErrorKind::DuplicateKey: return "duplicate-key";
    case ErrorKind::UnmappedOptionSet: return "unmapped-option-set";
    case ErrorKind::UnknownLabel: return "unknown-label";
    case ErrorKind::Filter: return "filter-error";
    case ErrorKind::EmptyQuestion: return "empty-question";
    case ErrorKind::Alignment: return "alignment-error";
    case ErrorKind::CorruptEmbedding: return "corrupt-embedding";
    case ErrorKind::Format: return "format-error";
    case ErrorKind::Config: return "config-error";
    case ErrorKind::Shape: return "shape-mismatch";
    case ErrorKind::Index: return "index-error";
    case ErrorKind::CacheMismatch: return "cache-mismatch";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::DegenerateImportance: return "degenerate-importance";
    case ErrorKind::Version: return "version-error";
    case ErrorKind::Checksum: return "checksum-error";
    case ErrorKind::Numerical: return "numerical-error";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::Infeasible: return "mechanism-infeasible";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Singular: return "singular-fit";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Structural: return "structurally-impossible";
    case ErrorKind::Dependency: return "dependency-error";
    case ErrorKind::Usage: return "usage-error";
  }
  return "error";
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Reject the low residue band so every value in [0, n) is equally likely.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t state = seed ^ fnv1a(tag);
  splitmix64(state);
  return splitmix64(state);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  std::uint64_t state = derive_seed(seed, tag) + index * 0xD1B54A32D192ED03ULL;
  return splitmix64(state);
}

}  // namespace aisurvey
