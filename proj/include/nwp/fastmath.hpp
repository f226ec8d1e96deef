#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace nwp {

// exp(x) for float via 2^k * e^r with k = round(x/ln2), |r| <= ln2/2, and a
// degree-6 Taylor polynomial for e^r. Max relative error is about 2.5e-7 over
// the clamped range [-87, 88]. Pure arithmetic, so results do not depend on
// the host libm. The softmax over a 15K vocabulary is the hot loop; this is
// several times faster than calling expf per element.
inline float fast_exp(float x) {
    x = std::min(std::max(x, -87.0f), 88.0f);
    const float t = x * 1.44269504088896341f;
    const float k = std::floor(t + 0.5f);
    const int32_t ki = static_cast<int32_t>(k);
    // r = x - k*ln2 with ln2 split into an exact high part and a correction
    float r = x - k * 0.693359375f;
    r -= k * -2.12194440e-4f;
    float p = 1.3888889e-3f; // 1/720
    p = p * r + 8.3333333e-3f;
    p = p * r + 4.1666668e-2f;
    p = p * r + 1.6666667e-1f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const uint32_t scale_bits = static_cast<uint32_t>(ki + 127) << 23;
    return p * std::bit_cast<float>(scale_bits);
}

// exp dispatch: float paths use the polynomial, double paths (the
// gradient-check mode) use the full-precision libm call.
inline float exp_of(float x) { return fast_exp(x); }
inline double exp_of(double x) { return std::exp(x); }

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + exp_of(-x));
}

} // namespace nwp
