#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace cadre {

// Deterministic RNG used everywhere state is drawn. All distributions are
// implemented by hand on top of mt19937_64 so streams are reproducible
// across standard libraries (std::uniform_real_distribution is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (deterministic, no cached spare).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Derive an independent stream, e.g. one per sample or per worker.
    Rng fork(std::uint64_t salt) {
        const std::uint64_t a = engine_();
        return Rng(a ^ (salt * 0x9e3779b97f4a7c15ULL + 0xd1b54a32d192ed03ULL));
    }

private:
    std::mt19937_64 engine_;
};

} // namespace cadre
