#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hybridreg {

// mt19937_64 plus explicit scaling helpers. std:: distributions are not
// bit-specified across standard libraries, so all draws go through these.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0,1) with 53-bit resolution
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n >= 1; rejection keeps it unbiased
  uint64_t uniform_index(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // standard normal, Box-Muller; caches the second variate
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // decorrelated child stream, for per-pair / per-level seeding
  Rng fork(uint64_t salt) {
    return Rng(eng_() ^ (salt * 0x9e3779b97f4a7c15ULL));
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hybridreg
