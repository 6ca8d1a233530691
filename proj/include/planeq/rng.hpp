#pragma once

#include <cstdint>
#include <cmath>

namespace planeq {

// Counter-based deterministic random stream. A draw is a pure function of
// (seed, counter), so identical streams replay identically on every platform
// and independent streams can be derived for parallel work.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : seed_(seed) {}

    // Independent child stream; mixing is itself counter-based so derivation
    // order does not matter.
    static RngStream derive(uint64_t seed, uint64_t stream_id) {
        return RngStream(mix(seed, 0x9E6C63D0876A3EF1ull ^ stream_id));
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    uint64_t next_u64() { return mix(seed_, counter_++); }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi_inclusive - lo + 1));
    }

    // Box-Muller; consumes two draws per call, never caches, so the
    // (seed, counter) -> value mapping stays pure.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    // SplitMix64 finalizer over a Weyl sequence.
    static uint64_t mix(uint64_t seed, uint64_t counter) {
        uint64_t z = seed + 0x9E3779B97F4A7C15ull * (counter + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace planeq
