#pragma once

#include <cmath>
#include <cstdint>

namespace mecperf::core {

/// SplitMix64 (Steele, Lea, Flood 2014). Fixed algorithm so that seeded
/// selections reproduce across platforms and languages. With state 1234567
/// the first outputs are 6457827717110365317, 3203168211198807973,
/// 9817491932198370423, 4593380528125082431, 16408922859458223821.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Exponential with the given mean, by inversion.
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

/// Stateless mix of two words; used to derive independent child seeds.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  SplitMix64 g(parent ^ (0xD1B54A32D192ED03ULL * (index + 1)));
  g.next();
  return g.next();
}

}  // namespace mecperf::core
