#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qsm {

/// Deterministic random stream: mt19937_64 bits turned into doubles by fixed
/// arithmetic (no std::*_distribution, whose output is implementation
/// defined). Same seed, same sequence.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t salt = 0)
        : gen_(seed ^ (0x9E3779B97F4A7C15ull * (salt + 1))) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace qsm
