// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "fipt/math.hpp"

namespace fipt {

// Base color / metallic / roughness, all in [0,1].
struct BrdfParams {
    Vec3 base_color{0.5f, 0.5f, 0.5f};
    float metallic = 0.f;
    float roughness = 1.f;
};

// Roughness is clamped upward everywhere so the level-0 specular lobe stays
// integrable instead of degenerating to a delta.
inline constexpr float kMinRoughness = 0.01f;

struct BrdfCoeffs {
    Vec3 k_d;
    Vec3 k_s;
};

// k_d = a(1-m), k_s = 0.04(1-m) + a m.
inline BrdfCoeffs coeffs(const Vec3& base_color, float metallic) {
    return {base_color * (1.f - metallic),
            Vec3(0.04f * (1.f - metallic)) + base_color * metallic};
}

// One Schlick Fresnel term split into the k_s-weighted part and the additive
// part: F(c) = k_s * F0(c) + F1(c) with F0 = 1-(1-c)^5, F1 = (1-c)^5.
template <typename T>
void fresnel_split(T h_dot_wi, T& f0, T& f1) {
    T one_minus = T(1) - h_dot_wi;
    T p2 = one_minus * one_minus;
    f1 = p2 * p2 * one_minus;
    f0 = T(1) - f1;
}

namespace microfacet {

inline float alpha_from_roughness(float sigma) {
    float s = std::max(sigma, kMinRoughness);
    return s * s;
}

// GGX (Trowbridge-Reitz) normal distribution. The denominator is computed as
// sin^2 + a^2 cos^2 to avoid cancellation at small alpha.
inline float ggx_d(float n_dot_h, float alpha) {
    if (n_dot_h <= 0.f) return 0.f;
    float a2 = alpha * alpha;
    float c2 = n_dot_h * n_dot_h;
    float s2 = std::max(0.f, 1.f - c2);
    float d = a2 * c2 + s2;
    return a2 / (kPi * d * d);
}

// Schlick-GGX masking with k = alpha/2; the separable product of these is
// the material's shadow-masking term.
inline float g1_schlick(float n_dot_v, float alpha) {
    float k = alpha * 0.5f;
    return n_dot_v / (n_dot_v * (1.f - k) + k);
}

inline float smith_g(float n_dot_i, float n_dot_o, float alpha) {
    return g1_schlick(n_dot_i, alpha) * g1_schlick(n_dot_o, alpha);
}

// Exact GGX Smith G1, used only to express the true density of the visible
// normal sampler (the material term above is the cheaper approximation).
inline float g1_exact(float n_dot_v, float alpha) {
    if (n_dot_v <= 0.f) return 0.f;
    float a2 = alpha * alpha;
    return 2.f * n_dot_v / (n_dot_v + std::sqrt(a2 + (1.f - a2) * n_dot_v * n_dot_v));
}

}  // namespace microfacet

// The three coefficient-free integrand factors of the reflection integral:
//   full BRDF (with cosine) = k_d * g_d + k_s * g_s0 + g_s1.
struct FactoredBrdf {
    float g_d = 0.f;   // (n.wi)+ / pi
    float g_s0 = 0.f;  // F0 D G / (4 n.wo)
    float g_s1 = 0.f;  // F1 D G / (4 n.wo)
};

// n is flipped internally to face wo; evaluates to zero when wi falls below
// the surface.
inline FactoredBrdf eval_factored(float sigma, const Vec3& wi, const Vec3& wo, const Vec3& n_in) {
    FactoredBrdf out;
    Vec3 n = n_in;
    float cos_o = dot(n, wo);
    if (cos_o < 0.f) {
        n = -n;
        cos_o = -cos_o;
    }
    if (cos_o <= 1e-7f) return out;
    float cos_i = dot(n, wi);
    if (cos_i <= 0.f) return out;

    out.g_d = cos_i * kInvPi;

    Vec3 h = wi + wo;
    float hl = length(h);
    if (hl <= 1e-12f) return out;
    h = h / hl;
    float alpha = microfacet::alpha_from_roughness(sigma);
    float d = microfacet::ggx_d(dot(n, h), alpha);
    float g = microfacet::smith_g(cos_i, cos_o, alpha);
    float common = d * g / (4.f * cos_o);
    float f0, f1;
    fresnel_split(clamp(dot(h, wi), 0.f, 1.f), f0, f1);
    out.g_s0 = f0 * common;
    out.g_s1 = f1 * common;
    return out;
}

// Full BRDF of the material model, cosine term included. Implemented as the
// exact recombination of the factored terms so the two routes agree to the
// last bit.
inline Vec3 eval_brdf(const BrdfParams& params, const Vec3& wi, const Vec3& wo, const Vec3& n) {
    FactoredBrdf f = eval_factored(params.roughness, wi, wo, n);
    BrdfCoeffs c = coeffs(params.base_color, params.metallic);
    return c.k_d * f.g_d + c.k_s * f.g_s0 + Vec3(f.g_s1);
}

enum class Lobe { Diffuse, Specular };

struct LobeSample {
    Vec3 wi;
    float pdf = 0.f;
    Lobe lobe = Lobe::Diffuse;
};

namespace detail_brdf {

inline Vec3 to_world(const Vec3& local, const Vec3& n) {
    Vec3 t, b;
    build_onb(n, t, b);
    return t * local.x + b * local.y + n * local.z;
}

inline Vec3 to_local(const Vec3& world, const Vec3& n) {
    Vec3 t, b;
    build_onb(n, t, b);
    return {dot(world, t), dot(world, b), dot(world, n)};
}

inline Vec3 sample_cosine_local(Vec2 u) {
    float r = std::sqrt(u.x);
    float phi = 2.f * kPi * u.y;
    float z = std::sqrt(std::max(0.f, 1.f - u.x));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

// Heitz 2018 visible-normal sampling for isotropic GGX; wo_local.z > 0.
inline Vec3 sample_vndf_local(const Vec3& wo_local, float alpha, Vec2 u) {
    Vec3 vh = normalize(Vec3{alpha * wo_local.x, alpha * wo_local.y, wo_local.z});
    float lensq = vh.x * vh.x + vh.y * vh.y;
    Vec3 t1 = lensq > 0.f ? Vec3{-vh.y, vh.x, 0.f} / std::sqrt(lensq) : Vec3{1.f, 0.f, 0.f};
    Vec3 t2 = cross(vh, t1);
    float r = std::sqrt(u.x);
    float phi = 2.f * kPi * u.y;
    float p1 = r * std::cos(phi);
    float p2 = r * std::sin(phi);
    float s = 0.5f * (1.f + vh.z);
    p2 = (1.f - s) * std::sqrt(std::max(0.f, 1.f - p1 * p1)) + s * p2;
    Vec3 nh = t1 * p1 + t2 * p2 + vh * std::sqrt(std::max(0.f, 1.f - p1 * p1 - p2 * p2));
    return normalize(Vec3{alpha * nh.x, alpha * nh.y, std::max(1e-6f, nh.z)});
}

}  // namespace detail_brdf

inline float pdf_cosine(const Vec3& wi, const Vec3& n) {
    float c = dot(wi, n);
    return c > 0.f ? c * kInvPi : 0.f;
}

// Density of the VNDF sampler in solid angle: G1_exact(wo) D(h) / (4 n.wo).
// Defined wherever the half vector is a valid visible normal, which includes
// reflections below the horizon (those samples carry zero BRDF value but
// their density mass is real).
inline float pdf_vndf(float sigma, const Vec3& wi, const Vec3& wo, const Vec3& n) {
    float cos_o = dot(n, wo);
    if (cos_o <= 0.f) return 0.f;
    Vec3 h = wi + wo;
    float hl = length(h);
    if (hl <= 1e-12f) return 0.f;
    h = h / hl;
    float alpha = microfacet::alpha_from_roughness(sigma);
    float d = microfacet::ggx_d(dot(n, h), alpha);
    return microfacet::g1_exact(cos_o, alpha) * d / (4.f * cos_o);
}

// Sample a reflected direction from the GGX lobe at the given roughness.
inline Vec3 sample_vndf(float sigma, const Vec3& wo, const Vec3& n, Vec2 u) {
    float alpha = microfacet::alpha_from_roughness(sigma);
    Vec3 wo_local = detail_brdf::to_local(wo, n);
    Vec3 h_local = detail_brdf::sample_vndf_local(wo_local, alpha, u);
    Vec3 h = detail_brdf::to_world(h_local, n);
    return reflect(wo, h);
}

inline float lobe_mix_weight(const BrdfCoeffs& c) {
    float ld = luminance(c.k_d);
    float ls = luminance(c.k_s);
    float denom = ld + ls;
    if (denom <= 0.f) return 0.5f;
    return clamp(ld / denom, 0.1f, 0.9f);
}

// Mixture density matching sample_brdf, evaluable for any direction (used by
// multiple importance sampling).
inline float pdf_brdf(const BrdfParams& params, const Vec3& wo_in, const Vec3& n_in,
                      const Vec3& wi) {
    Vec3 n = n_in;
    if (dot(n, wo_in) < 0.f) n = -n;
    float w_d = lobe_mix_weight(coeffs(params.base_color, params.metallic));
    return w_d * pdf_cosine(wi, n) + (1.f - w_d) * pdf_vndf(params.roughness, wi, wo_in, n);
}

// Cosine/VNDF mixture importance sampling of the full BRDF. u.x selects the
// lobe (stratified remap), u.y/u.z drive the lobe sampler.
inline LobeSample sample_brdf(const BrdfParams& params, const Vec3& wo, const Vec3& n_in,
                              const Vec3& u) {
    Vec3 n = n_in;
    if (dot(n, wo) < 0.f) n = -n;
    BrdfCoeffs c = coeffs(params.base_color, params.metallic);
    float w_d = lobe_mix_weight(c);

    LobeSample ls;
    if (u.x < w_d) {
        ls.lobe = Lobe::Diffuse;
        ls.wi = detail_brdf::to_world(detail_brdf::sample_cosine_local({u.y, u.z}), n);
    } else {
        ls.lobe = Lobe::Specular;
        ls.wi = sample_vndf(params.roughness, wo, n, {u.y, u.z});
    }
    if (dot(ls.wi, n) <= 0.f) {
        ls.pdf = 0.f;
        return ls;
    }
    ls.pdf = w_d * pdf_cosine(ls.wi, n) + (1.f - w_d) * pdf_vndf(params.roughness, ls.wi, wo, n);
    return ls;
}

}  // namespace fipt
