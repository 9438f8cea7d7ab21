#pragma once

#include <cstdint>
#include <cstring>

namespace speckv {

// IEEE 754 binary16 conversions. Cache values carry 16-bit precision, so blocks
// snap to this grid on construction and Raw payloads round-trip bit exactly.

inline std::uint16_t f32_to_f16_bits(float value) {
    std::uint32_t f;
    std::memcpy(&f, &value, 4);
    const std::uint32_t sign = (f >> 16) & 0x8000u;
    std::uint32_t exp = (f >> 23) & 0xffu;
    std::uint32_t mant = f & 0x7fffffu;

    if (exp == 0xffu) { // inf / nan
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
    }
    // Re-bias from 127 to 15.
    int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1f) { // overflow -> saturate to max finite half
        return static_cast<std::uint16_t>(sign | 0x7bffu);
    }
    if (e <= 0) { // subnormal half or zero
        if (e < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u; // implicit bit
        const int shift = 14 - e;
        std::uint32_t half = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) half++;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) {
        half++; // may carry into the exponent; 0x7c00 would mean overflow
        if ((half & 0x7fffu) >= 0x7c00u) half = (half & 0x8000u) | 0x7bffu;
    }
    return static_cast<std::uint16_t>(sign | half);
}

inline float f16_bits_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t f;
    if (exp == 0) {
        if (mant == 0) {
            f = sign;
        } else { // subnormal: normalize
            int e = -1;
            do {
                mant <<= 1;
                e++;
            } while (!(mant & 0x400u));
            f = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 0x1fu) {
        f = sign | 0x7f800000u | (mant << 13);
    } else {
        f = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float out;
    std::memcpy(&out, &f, 4);
    return out;
}

inline float snap_to_f16(float value) {
    return f16_bits_to_f32(f32_to_f16_bits(value));
}

} // namespace speckv
