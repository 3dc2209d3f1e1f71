#pragma once

#include <cstdint>
#include <random>

namespace tsds {

// SplitMix64 finalizer. Used to derive independent stream seeds (per-epoch,
// per-restart) from a base seed; the streams themselves are mt19937_64.
// Both algorithms are fully specified, so sequences reproduce across
// platforms and releases.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double u01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Index in [0, n). The double path keeps the draw sequence platform-stable;
// the modulo-free construction keeps bias below 2^-53 * n.
inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
  auto i = static_cast<std::size_t>(u01(g) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

// Standard normal via Box-Muller (no rejection, so draw count per sample is
// fixed). std::normal_distribution is implementation-defined; this is not.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : g_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = u01(g_);
    double u2 = u01(g_);
    // u1 == 0 would take log(0); the smallest representable draw is 2^-53.
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 g_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsds
