#pragma once

#include <cstdint>

namespace nwp {

// SplitMix64 (Steele, Lea, Flood 2014). One 64-bit word of state, a fixed
// odd-gamma increment and a finalizer mix per draw. Identical seeds produce
// identical sequences on every platform; split() derives an independent
// stream from the current one.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 24 random mantissa bits.
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    }

    // Uniform in [0,1) with 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    Rng split() { return Rng(next_u64()); }

private:
    uint64_t state_;
};

} // namespace nwp
