#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace nfloc {

// Counter-based generator: every draw is a pure function of (key, counter), so
// samples do not depend on the order in which triples or trials are visited.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(mix(key ^ 0x9e3779b97f4a7c15ULL)) {}

  // Derives a key from a seed and a list of stream coordinates.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = mix(seed + 0x632be59bd9b4e019ULL);
    for (std::uint64_t c : coords) h = mix(h ^ (c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
    return h;
  }

  std::uint64_t next_u64() { return mix(key_ + 0xbf58476d1ce4e5b9ULL * (++counter_)); }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second variate is discarded so each call consumes a fixed
  // number of counter steps.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace nfloc
