#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "pfgen/errors.hpp"

namespace pfgen {

// Algorithm identifier recorded in dataset manifests and run summaries.
inline constexpr const char* kRngAlgorithm = "mt19937_64/box-muller";

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Child stream seed for a master seed and a substream index.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  return master ^ splitmix64(index + 1);
}

// Deterministic random stream: mt19937_64 for bits, explicit 53-bit mapping
// for uniforms, Box-Muller pairs for normals. All draws are reproducible for
// equal seeds within one build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, ErrorCategory::domain, "Rng::below: n must be positive");
    return next_u64() % n;
  }

  // One Box-Muller pair; consumes exactly two uniforms.
  std::pair<double, double> normal_pair() {
    double u1 = 1.0 - uniform01();  // (0, 1]: keeps log() finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  // Single normal draw; consumes a full pair, second value discarded.
  double standard_normal() { return normal_pair().first; }

  // Fills out with standard normals pairwise; an odd count discards the
  // second half of the last pair.
  void fill_standard_normal(std::span<float> out) {
    std::size_t i = 0;
    while (i + 1 < out.size()) {
      auto [a, b] = normal_pair();
      out[i++] = static_cast<float>(a);
      out[i++] = static_cast<float>(b);
    }
    if (i < out.size()) out[i] = static_cast<float>(standard_normal());
  }

  // Independent child stream for a substream index.
  Rng substream(std::uint64_t index) const { return Rng(mix_seed(seed_, index)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace pfgen
