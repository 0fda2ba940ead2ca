#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bodybench {

// Counter-based generator. Output i of stream (seed, stream) is
//   mix64(key + (i + 1) * 0x9E3779B97F4A7C15), key = mix64(seed ^ mix64(stream + 0xD1B54A32D192ED03))
// where mix64 is the SplitMix64 finalizer. Every draw depends only on
// (seed, stream, counter), so any substream can be reproduced in isolation
// and corpora are identical across platforms and implementations.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(stream + 0xD1B54A32D192ED03ULL))) {}

  // Independent child stream, e.g. one per scene index.
  CounterRng substream(std::uint64_t index) const { return CounterRng(key_, index + 1); }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] (inclusive); modulo bias is below 2^-40 for
  // the ranges used here.
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bodybench
