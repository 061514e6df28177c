#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>

// Sine/cosine from plain IEEE arithmetic so that the 4-lane path and the scalar
// path give bit-identical results. Requires -ffp-contract=off.
//
// Cody-Waite reduction by pi/2 in three 33-bit pieces, then the fdlibm kernel
// polynomials on [-pi/4, pi/4]. The quadrant comes from the low mantissa bits
// of the rounding-magic sum. Accurate to a couple of ulp for |x| < 2^19.

namespace sand::detail {

inline constexpr double kTwoOverPi = 6.36619772367581382433e-01;
inline constexpr double kPio2_1 = 1.57079632673412561417e+00;
inline constexpr double kPio2_2 = 6.07710050630396597660e-11;
inline constexpr double kPio2_3 = 2.02226624871116645580e-21;
inline constexpr double kRoundMagic = 6755399441055744.0;  // 1.5 * 2^52

inline constexpr double kS1 = -1.66666666666666324348e-01;
inline constexpr double kS2 = 8.33333333332248946124e-03;
inline constexpr double kS3 = -1.98412698298579493134e-04;
inline constexpr double kS4 = 2.75573137070700676789e-06;
inline constexpr double kS5 = -2.50507602534068634195e-08;
inline constexpr double kS6 = 1.58969099521155010221e-10;

inline constexpr double kC1 = 4.16666666666666019037e-02;
inline constexpr double kC2 = -1.38888888888741095749e-03;
inline constexpr double kC3 = 2.48015872894767294178e-05;
inline constexpr double kC4 = -2.75573143513906633035e-07;
inline constexpr double kC5 = 2.08757232129817482790e-09;
inline constexpr double kC6 = -1.13596475577881948265e-11;

inline constexpr std::uint64_t kSignBit = 0x8000000000000000ull;

// Shared body. D is double or a 4-lane double vector; U the matching unsigned type.
template <typename D, typename U, typename ToBits, typename FromBits>
inline void sincos_body(D x, D& s_out, D& c_out, ToBits to_bits, FromBits from_bits) {
    const D shifted = x * kTwoOverPi + kRoundMagic;
    const D k = shifted - kRoundMagic;
    const D r = ((x - k * kPio2_1) - k * kPio2_2) - k * kPio2_3;
    const D z = r * r;
    const D ps = kS2 + z * (kS3 + z * (kS4 + z * (kS5 + z * kS6)));
    const D s = r + r * z * (kS1 + z * ps);
    const D pc = kC1 + z * (kC2 + z * (kC3 + z * (kC4 + z * (kC5 + z * kC6))));
    const D c = (1.0 - 0.5 * z) + z * z * pc;

    const U q = to_bits(shifted) & 3u;
    const U swap = U{} - (q & 1u);  // all ones for odd quadrants
    const U sb = to_bits(s), cb = to_bits(c);
    const U sin_bits = (sb & ~swap) | (cb & swap);
    const U cos_bits = (cb & ~swap) | (sb & swap);
    const U sin_sign = (q >> 1) << 63;                // quadrants 2, 3
    const U cos_sign = (((q + 1u) >> 1) & 1u) << 63;  // quadrants 1, 2
    s_out = from_bits(sin_bits ^ sin_sign);
    c_out = from_bits(cos_bits ^ cos_sign);
}

inline void sincos_one(double x, double& s_out, double& c_out) {
    sincos_body<double, std::uint64_t>(
        x, s_out, c_out, [](double v) { return std::bit_cast<std::uint64_t>(v); },
        [](std::uint64_t b) { return std::bit_cast<double>(b); });
}

using Lane4 = double __attribute__((vector_size(32)));
using Lane4u = std::uint64_t __attribute__((vector_size(32)));

inline Lane4 load4(const double* p) {
    Lane4 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store4(double* p, Lane4 v) { std::memcpy(p, &v, sizeof v); }

inline void sincos4(Lane4 x, Lane4& s_out, Lane4& c_out) {
    sincos_body<Lane4, Lane4u>(
        x, s_out, c_out, [](Lane4 v) { return reinterpret_cast<Lane4u&>(v); },
        [](Lane4u b) { return reinterpret_cast<Lane4&>(b); });
}

/// out_sin[i] = sin(scale * in[i]), out_cos[i] = cos(scale * in[i]); out_cos may be null.
inline void sincos_scaled(const double* in, double scale, double* out_sin, double* out_cos, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        Lane4 s, c;
        sincos4(load4(in + i) * scale, s, c);
        store4(out_sin + i, s);
        if (out_cos) store4(out_cos + i, c);
    }
    for (; i < n; ++i) {
        double s, c;
        sincos_one(scale * in[i], s, c);
        out_sin[i] = s;
        if (out_cos) out_cos[i] = c;
    }
}

}  // namespace sand::detail
