#pragma once

#include <bit>
#include <cstdint>

namespace nwp {

// IEEE 754 binary16 conversion. Rounding is to nearest, ties to even.
// Values whose magnitude rounds past 65504 (the largest finite half)
// saturate to +-65504 instead of overflowing to infinity, so converted
// tensors stay finite.

inline uint16_t f16_encode(float x) {
    const uint32_t bits = std::bit_cast<uint32_t>(x);
    const uint16_t sign = static_cast<uint16_t>((bits >> 16) & 0x8000u);
    const int32_t exp32 = static_cast<int32_t>((bits >> 23) & 0xFFu);
    const uint32_t mant = bits & 0x7FFFFFu;

    if (exp32 == 0xFF) {
        // Inf or NaN. Callers pass finite values; keep NaN as NaN, saturate Inf.
        return mant ? static_cast<uint16_t>(sign | 0x7E00u)
                    : static_cast<uint16_t>(sign | 0x7BFFu);
    }

    const int32_t e = exp32 - 127 + 15;
    if (e >= 31) {
        return static_cast<uint16_t>(sign | 0x7BFFu); // saturate to 65504
    }
    if (e <= 0) {
        // Subnormal half (or zero). e == -10 corresponds to 2^-25, half of
        // the smallest subnormal; anything below that rounds to zero.
        if (e < -10) {
            return sign;
        }
        const uint32_t m = mant | 0x800000u; // restore implicit bit
        const int32_t shift = 14 - e;        // in [14, 24]
        const uint32_t half = 1u << (shift - 1);
        const uint32_t rest = m & ((1u << shift) - 1);
        uint32_t out = m >> shift;
        if (rest > half || (rest == half && (out & 1u))) {
            ++out; // may carry into the normal range; the encoding is contiguous
        }
        return static_cast<uint16_t>(sign | out);
    }

    uint32_t out = (static_cast<uint32_t>(e) << 10) | (mant >> 13);
    const uint32_t rest = mant & 0x1FFFu;
    if (rest > 0x1000u || (rest == 0x1000u && (out & 1u))) {
        ++out;
    }
    if (out >= 0x7C00u) {
        return static_cast<uint16_t>(sign | 0x7BFFu); // rounded past max finite
    }
    return static_cast<uint16_t>(sign | out);
}

inline float f16_decode(uint16_t h) {
    const float sign = (h & 0x8000u) ? -1.0f : 1.0f;
    const uint32_t e = (h >> 10) & 0x1Fu;
    const uint32_t m = h & 0x3FFu;

    if (e == 0) {
        return sign * static_cast<float>(m) * 0x1.0p-24f;
    }
    if (e == 31) {
        const uint32_t bits = (static_cast<uint32_t>(h & 0x8000u) << 16) |
                              0x7F800000u | (m << 13);
        return std::bit_cast<float>(bits);
    }
    const uint32_t bits = (static_cast<uint32_t>(h & 0x8000u) << 16) |
                          ((e - 15 + 127) << 23) | (m << 13);
    return std::bit_cast<float>(bits);
}

// Storage round trip: the nearest binary16 value, as a float.
inline float f16_round(float x) { return f16_decode(f16_encode(x)); }

} // namespace nwp
