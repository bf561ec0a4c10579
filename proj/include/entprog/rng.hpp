#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace entprog {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream, e.g. derive_seed(seed, {kStreamTrain, step}).
/// Every random draw in a run comes from a stream keyed this way, so a run can
/// be resumed from (seed, step) alone.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix_seed(seed);
  for (auto k : keys) h = mix_seed(h ^ mix_seed(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Stream tags.
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamData = 2,
  kStreamHoldout = 3,
  kStreamPriority = 4,
  kStreamPretrain = 5,
  kStreamTrain = 6,
  kStreamSupernet = 7,
  kStreamShuffle = 8,
  kStreamSample = 9,
  kStreamExperiment = 10,
};

/// Portable uniform/normal draws on top of mt19937_64. The standard
/// distributions are implementation-defined, so these are written out to keep
/// dataset files identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; no cached second value so the stream
  /// state is the engine alone.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace entprog
