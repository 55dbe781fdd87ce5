#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace retouch {

// Deterministic RNG wrapper. All sampling goes through explicit
// mt19937_64 bit manipulation instead of std distributions, whose
// output is not pinned by the standard.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    size_t index(size_t n) {
        size_t i = static_cast<size_t>(uniform() * static_cast<double>(n));
        return i >= n ? n - 1 : i;
    }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Gumbel(0,1): -ln(-ln u), u clamped away from {0,1}
    double gumbel() {
        double u = uniform();
        if (u < 1e-16) u = 1e-16;
        if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
        return -std::log(-std::log(u));
    }

    uint64_t raw() { return gen_(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace retouch
