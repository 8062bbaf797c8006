#pragma once

#include <cstdint>
#include <cmath>

namespace lfd {

// Deterministic splitmix64-based generator. All randomness in the project
// flows through explicit Rng instances; state is a single u64 so it can be
// recorded in checkpoints and restored exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31u);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Derive an independent stream; used to give each episode its own seed.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        Rng r(a ^ (0x9e3779b97f4a7c15ull * (b + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

}  // namespace lfd
