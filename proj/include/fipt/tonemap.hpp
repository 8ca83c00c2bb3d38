// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cmath>

#include "fipt/math.hpp"

namespace fipt {

// sRGB transfer curve and its derivative. Generic over float/double so the
// loss gradient checks can run in f64.
template <typename T>
T srgb_encode(T y) {
    if (y <= T(0.0031308)) return T(12.92) * y;
    return T(1.055) * std::pow(y, T(1.0 / 2.4)) - T(0.055);
}

template <typename T>
T srgb_encode_deriv(T y) {
    if (y <= T(0.0031308)) return T(12.92);
    return T(1.055 / 2.4) * std::pow(y, T(1.0 / 2.4 - 1.0));
}

// HDR compression used by the photometric losses: Reinhard x/(1+x) followed
// by the sRGB curve. Monotone, maps [0, inf) into [0, 1). Swappable constant
// of the pipeline, not a claim about any particular reference curve.
template <typename T>
T tonemap_scalar(T x) {
    assert(x >= T(0));
    if (x < T(0)) x = T(0);
    return srgb_encode(x / (T(1) + x));
}

template <typename T>
T tonemap_scalar_deriv(T x) {
    if (x < T(0)) x = T(0);
    T y = x / (T(1) + x);
    T dydx = T(1) / ((T(1) + x) * (T(1) + x));
    return srgb_encode_deriv(y) * dydx;
}

inline Vec3 tonemap(const Vec3& rgb) {
    return {tonemap_scalar(rgb.x), tonemap_scalar(rgb.y), tonemap_scalar(rgb.z)};
}

// Simple gamma for metric-space comparisons (clamped to [0,1]).
inline float gamma_encode(float x, float gamma = 1.f / 2.2f) {
    if (x <= 0.f) return 0.f;
    return clamp(std::pow(x, gamma), 0.f, 1.f);
}

inline Vec3 gamma_encode(const Vec3& rgb, float gamma = 1.f / 2.2f) {
    return {gamma_encode(rgb.x, gamma), gamma_encode(rgb.y, gamma), gamma_encode(rgb.z, gamma)};
}

}  // namespace fipt
