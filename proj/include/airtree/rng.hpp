#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace airtree {

// Deterministic RNG used by every stochastic component. mt19937_64 has a
// standard-specified output sequence, and all derived draws below avoid
// std::*_distribution (whose algorithms are implementation-defined), so a
// fixed seed reproduces byte-identical artifacts on any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform index in [0, n). Modulo bias is negligible for our n and the
  // result is deterministic, which is what matters here.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  // Box-Muller, one sample per call (the spare is discarded to keep the
  // draw count independent of call interleaving).
  double normal(double mean, double stddev) {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586477 * u2);
  }

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer.
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Independent child stream, e.g. one per forest tree or per workload
  // bucket, so parallel training stays deterministic.
  static Rng derived(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed ^ stream * 0x9e3779b97f4a7c15ull));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace airtree
