// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fipt/brdf.hpp"
#include "fipt/emitter.hpp"
#include "fipt/geometry.hpp"
#include "fipt/image.hpp"
#include "fipt/parallel.hpp"
#include "fipt/radiance_cache.hpp"
#include "fipt/renderer.hpp"
#include "fipt/rng.hpp"
#include "fipt/scene.hpp"

namespace fipt {

inline constexpr int kRoughnessLevels = 6;

// linspace(0, 1, 6)
inline float roughness_knot(int k) { return static_cast<float>(k) / (kRoughnessLevels - 1); }

struct BakeConfig {
    int spp_diffuse = 128;
    int spp_specular = 64;
    int max_path_depth = 8;
    float sigma_threshold = 0.6f;  // growth stops at sigma above this
    int rr_start_depth = 3;
    float throughput_clamp = 20.f;  // refinement path growth only
    bool denoise = true;
    bool use_radiance_cache = true;  // refinement termination into L'
    int threads = 1;

    void validate() const {
        if (spp_diffuse <= 0 || spp_specular <= 0)
            throw std::runtime_error("BakeConfig: spp must be positive");
        if (!(sigma_threshold > 0.f && sigma_threshold < 1.f))
            throw std::runtime_error("BakeConfig: sigma_threshold must be in (0,1)");
        if (max_path_depth < 1) throw std::runtime_error("BakeConfig: max_path_depth < 1");
    }
};

struct HitRecord {
    int32_t triangle = -1;  // -1 = primary miss
    Vec3 position;
    Vec3 normal;  // shading normal (unflipped)

    bool valid() const { return triangle >= 0; }
};

// Per-view baked shading: one diffuse buffer plus (L_s^0, L_s^1) image pairs
// at the six roughness knots, and the pixel-center primary hits for reuse.
struct ViewShading {
    int width = 0, height = 0;
    HdrImage diffuse;
    std::array<HdrImage, kRoughnessLevels> spec0;
    std::array<HdrImage, kRoughnessLevels> spec1;
    std::vector<HitRecord> hits;
    uint64_t zero_radiance_samples = 0;  // cache misses + escapes folded to 0
    uint64_t total_samples = 0;

    double miss_rate() const {
        return total_samples ? static_cast<double>(zero_radiance_samples) / total_samples : 0.0;
    }
};

struct ShadingBuffers {
    std::vector<ViewShading> views;
};

// ---------------------------------------------------------------------------
// Factorized rendering (templated so the optimizer can run gradient checks in
// f64): L_r = k_d L_d + k_s Ls0(sigma) + Ls1(sigma).
// ---------------------------------------------------------------------------

template <typename T>
struct FactorizedEval {
    T value[3];
    T d_albedo[3];    // dL_c / da_c (diagonal in channels)
    T d_metallic[3];  // dL_c / dm
    T d_sigma[3];     // dL_c / dsigma
};

template <typename T>
FactorizedEval<T> factorized_render_t(const T ld[3], const T ls0[3], const T ls1[3],
                                      const T dls0[3], const T dls1[3], const T albedo[3],
                                      T metallic) {
    FactorizedEval<T> out;
    for (int c = 0; c < 3; ++c) {
        T k_d = albedo[c] * (T(1) - metallic);
        T k_s = T(0.04) * (T(1) - metallic) + albedo[c] * metallic;
        out.value[c] = k_d * ld[c] + k_s * ls0[c] + ls1[c];
        out.d_albedo[c] = (T(1) - metallic) * ld[c] + metallic * ls0[c];
        out.d_metallic[c] = -albedo[c] * ld[c] + (albedo[c] - T(0.04)) * ls0[c];
        out.d_sigma[c] = k_s * dls0[c] + dls1[c];
    }
    return out;
}

// Piecewise-linear interpolation across the six knots; exact at knots. Also
// reports the local slope (right-sided at knots, left-sided at sigma = 1).
struct SpecularLerp {
    Vec3 ls0, ls1;
    Vec3 dls0, dls1;  // d/dsigma
};

inline SpecularLerp lerp_specular(const ViewShading& view, int px, int py, float sigma) {
    float s = clamp(sigma, 0.f, 1.f) * (kRoughnessLevels - 1);
    int k0 = std::min(static_cast<int>(s), kRoughnessLevels - 2);
    int k1 = k0 + 1;
    float t = s - static_cast<float>(k0);
    Vec3 a0 = view.spec0[k0].at(px, py), b0 = view.spec0[k1].at(px, py);
    Vec3 a1 = view.spec1[k0].at(px, py), b1 = view.spec1[k1].at(px, py);
    SpecularLerp out;
    out.ls0 = lerp(a0, b0, t);
    out.ls1 = lerp(a1, b1, t);
    float slope = static_cast<float>(kRoughnessLevels - 1);
    out.dls0 = (b0 - a0) * slope;
    out.dls1 = (b1 - a1) * slope;
    return out;
}

inline FactorizedEval<float> factorized_render(const ViewShading& view, int px, int py,
                                               const BrdfParams& params) {
    SpecularLerp sl = lerp_specular(view, px, py, params.roughness);
    Vec3 ld = view.diffuse.at(px, py);
    float ldv[3] = {ld.x, ld.y, ld.z};
    float ls0[3] = {sl.ls0.x, sl.ls0.y, sl.ls0.z};
    float ls1[3] = {sl.ls1.x, sl.ls1.y, sl.ls1.z};
    float d0[3] = {sl.dls0.x, sl.dls0.y, sl.dls0.z};
    float d1[3] = {sl.dls1.x, sl.dls1.y, sl.dls1.z};
    float a[3] = {params.base_color.x, params.base_color.y, params.base_color.z};
    return factorized_render_t<float>(ldv, ls0, ls1, d0, d1, a, params.metallic);
}

// ---------------------------------------------------------------------------
// Denoising: one 3x3 edge-aware pass guided by hit position and normal.
// ---------------------------------------------------------------------------

inline void denoise_buffer(HdrImage& img, const std::vector<HitRecord>& hits, float scene_diag) {
    const float sigma_p2 = 1e-4f * scene_diag * scene_diag;  // (0.01 * diag)^2
    HdrImage out = img;
    int w = img.width, h = img.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const HitRecord& hc = hits[static_cast<size_t>(y) * w + x];
            if (!hc.valid()) continue;
            Vec3 acc(0.f);
            float wsum = 0.f;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    int qx = x + dx, qy = y + dy;
                    if (qx < 0 || qx >= w || qy < 0 || qy >= h) continue;
                    const HitRecord& hq = hits[static_cast<size_t>(qy) * w + qx];
                    if (!hq.valid()) continue;
                    float wn = std::max(0.f, dot(hc.normal, hq.normal));
                    wn = wn * wn;
                    wn = wn * wn;  // ^4
                    float wp = std::exp(-length_squared(hc.position - hq.position) / sigma_p2);
                    float wq = wn * wp;
                    acc += img.at(qx, qy) * wq;
                    wsum += wq;
                }
            }
            if (wsum > 0.f) out.set(x, y, max(acc / wsum, Vec3(0.f)));
        }
    }
    img = std::move(out);
}

inline void denoise_view(ViewShading& view, float scene_diag) {
    denoise_buffer(view.diffuse, view.hits, scene_diag);
    for (int k = 0; k < kRoughnessLevels; ++k) {
        denoise_buffer(view.spec0[k], view.hits, scene_diag);
        denoise_buffer(view.spec1[k], view.hits, scene_diag);
    }
}

// ---------------------------------------------------------------------------
// Stage 1: image-based shading initialization. Each pixel's primary hit
// gathers one-bounce estimates of the factored integrals, with the surface
// light field cache supplying incident radiance.
// ---------------------------------------------------------------------------

namespace detail_shading {

struct SampleStats {
    uint64_t zero = 0;
    uint64_t total = 0;
};

// Radiance arriving at x from direction wi, resolved against the cache only
// (stage 1): the value of L' at the first hit, zero on miss or escape.
inline Vec3 cache_radiance(const TriangleMesh& mesh, const Bvh& bvh, const RadianceCache& cache,
                           const Vec3& pos, const Vec3& geom_n, const Vec3& wi, float scene_eps,
                           SampleStats& stats) {
    ++stats.total;
    Ray ray;
    ray.origin = offset_origin(pos, geom_n, wi, scene_eps);
    ray.direction = wi;
    auto hit = intersect(bvh, mesh, ray);
    if (!hit) {
        ++stats.zero;
        return Vec3(0.f);
    }
    auto v = cache.query(hit->position);
    if (!v) {
        ++stats.zero;
        return Vec3(0.f);
    }
    return *v;
}

}  // namespace detail_shading

template <typename PixelFn>
void for_each_tile_pixel(int width, int height, int threads, uint64_t seed, uint64_t view_salt,
                         PixelFn&& fn) {
    constexpr int kTile = 16;
    int tiles_x = (width + kTile - 1) / kTile;
    int tiles_y = (height + kTile - 1) / kTile;
    parallel_items(static_cast<int64_t>(tiles_x) * tiles_y, threads, [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        Pcg32 rng(hash_combine(seed, view_salt, static_cast<uint64_t>(tile)));
        for (int y = ty * kTile; y < std::min((ty + 1) * kTile, height); ++y)
            for (int x = tx * kTile; x < std::min((tx + 1) * kTile, width); ++x) fn(x, y, rng);
    });
}

inline ShadingBuffers bake_initial(const Scene& scene, const Bvh& bvh, const RadianceCache& cache,
                                   const BakeConfig& config, uint64_t seed) {
    config.validate();
    float scene_eps = scene_epsilon_for(scene.aabb);
    float scene_diag = scene.aabb.diagonal();
    ShadingBuffers buffers;
    buffers.views.resize(scene.view_count());

    for (size_t v = 0; v < scene.view_count(); ++v) {
        const Camera& cam = scene.cameras[v];
        ViewShading& view = buffers.views[v];
        view.width = cam.width;
        view.height = cam.height;
        view.diffuse = HdrImage(cam.width, cam.height);
        for (int k = 0; k < kRoughnessLevels; ++k) {
            view.spec0[k] = HdrImage(cam.width, cam.height);
            view.spec1[k] = HdrImage(cam.width, cam.height);
        }
        view.hits.resize(static_cast<size_t>(cam.width) * cam.height);
        std::vector<detail_shading::SampleStats> tile_stats(
            static_cast<size_t>(cam.width) * cam.height);

        for_each_tile_pixel(cam.width, cam.height, config.threads, seed, v,
                            [&](int x, int y, Pcg32& rng) {
            size_t pix = static_cast<size_t>(y) * cam.width + x;
            auto hit = intersect(bvh, scene.mesh, cam.primary_ray(x, y));
            if (!hit) return;
            view.hits[pix] = {static_cast<int32_t>(hit->triangle), hit->position,
                              hit->shading_normal};
            Vec3 wo = -cam.primary_ray(x, y).direction;
            Vec3 n = hit->shading_normal;
            if (dot(n, wo) < 0.f) n = -n;
            detail_shading::SampleStats& stats = tile_stats[pix];

            // L_d: cosine sampling makes the estimator the plain mean of L'
            Vec3 acc(0.f);
            for (int s = 0; s < config.spp_diffuse; ++s) {
                Vec3 wi = detail_brdf::to_world(
                    detail_brdf::sample_cosine_local(rng.next_vec2()), n);
                acc += detail_shading::cache_radiance(scene.mesh, bvh, cache, hit->position,
                                                      hit->geometric_normal, wi, scene_eps, stats);
            }
            view.diffuse.set(x, y, acc / static_cast<float>(config.spp_diffuse));

            // specular knots: one GGX lobe sample stream per level, shared
            // between the two Fresnel-split buffers
            for (int k = 0; k < kRoughnessLevels; ++k) {
                float sigma_k = roughness_knot(k);
                Vec3 acc0(0.f), acc1(0.f);
                for (int s = 0; s < config.spp_specular; ++s) {
                    Vec3 wi = sample_vndf(sigma_k, wo, n, rng.next_vec2());
                    float pdf = pdf_vndf(sigma_k, wi, wo, n);
                    if (pdf <= 0.f) {
                        ++stats.total;
                        continue;
                    }
                    FactoredBrdf g = eval_factored(sigma_k, wi, wo, n);
                    if (g.g_s0 <= 0.f && g.g_s1 <= 0.f) {
                        ++stats.total;
                        continue;
                    }
                    Vec3 li = detail_shading::cache_radiance(scene.mesh, bvh, cache,
                                                             hit->position, hit->geometric_normal,
                                                             wi, scene_eps, stats);
                    acc0 += li * (g.g_s0 / pdf);
                    acc1 += li * (g.g_s1 / pdf);
                }
                view.spec0[k].set(x, y, acc0 / static_cast<float>(config.spp_specular));
                view.spec1[k].set(x, y, acc1 / static_cast<float>(config.spp_specular));
            }
        });

        for (const auto& s : tile_stats) {
            view.zero_radiance_samples += s.zero;
            view.total_samples += s.total;
        }
        if (config.denoise) denoise_view(view, scene_diag);
    }
    return buffers;
}

// ---------------------------------------------------------------------------
// Stage 3: path-traced shading refinement. The one-bounce estimate grows into
// a path through surfaces the current BRDF estimate deems specular
// (sigma <= threshold), terminating at emitters (L_e), near-diffuse surfaces
// (the radiance cache), or escape (environment / zero). Light sampling is
// combined with lobe sampling by the power heuristic.
// ---------------------------------------------------------------------------

namespace detail_shading {

// Outgoing radiance at a continuation vertex, traced with the estimated BRDF
// until a terminal event. Depth counts path vertices after the primary hit.
template <typename ParamsFn>
Vec3 continuation_radiance(const Scene& scene, const Bvh& bvh, const RadianceCache& cache,
                           ParamsFn&& params_at, const EmitterSet& emitters,
                           const EmitterSampler& sampler, const BakeConfig& config,
                           const Hit& first_hit, const Vec3& wo_first, float scene_eps,
                           Pcg32& rng, SampleStats& stats) {
    Vec3 L(0.f);
    Vec3 beta(1.f);
    Hit hit = first_hit;
    Vec3 wo = wo_first;

    for (int depth = 1; depth < config.max_path_depth; ++depth) {
        BrdfParams params = params_at(hit);
        Vec3 n = hit.shading_normal;
        if (dot(n, wo) < 0.f) n = -n;

        if (sampler.usable()) {
            auto lp = sampler.sample(scene.mesh, rng.next_float(), rng.next_vec2());
            Vec3 to_light = lp.position - hit.position;
            float d2 = length_squared(to_light);
            if (d2 > 1e-12f) {
                float dist = std::sqrt(d2);
                Vec3 wi = to_light / dist;
                float cos_s = dot(n, wi);
                float cos_l = std::fabs(dot(lp.normal, wi));
                if (cos_s > 0.f && cos_l > 1e-6f) {
                    Ray shadow;
                    shadow.origin =
                        offset_origin(hit.position, hit.geometric_normal, wi, scene_eps);
                    shadow.direction = wi;
                    shadow.t_max = dist - 2.f * scene_eps;
                    if (shadow.t_max > 0.f && !intersect_any(bvh, scene.mesh, shadow)) {
                        float pdf_light = lp.pdf_area * d2 / cos_l;
                        Vec3 f = eval_brdf(params, wi, wo, n);
                        float pdf_b = pdf_brdf(params, wo, n, wi);
                        float weight = power_heuristic(pdf_light, pdf_b);
                        L += beta * f * lp.radiance * (weight / pdf_light);
                    }
                }
            }
        }

        LobeSample ls = sample_brdf(params, wo, n, rng.next_vec3());
        if (ls.pdf <= 0.f) break;
        Vec3 f = eval_brdf(params, ls.wi, wo, n);
        Vec3 ratio = min(f / ls.pdf, Vec3(config.throughput_clamp));
        beta *= ratio;
        if (max_component(beta) <= 0.f) break;

        Ray ray;
        ray.origin = offset_origin(hit.position, hit.geometric_normal, ls.wi, scene_eps);
        ray.direction = ls.wi;
        auto next = intersect(bvh, scene.mesh, ray);
        ++stats.total;
        if (!next) {
            if (emitters.environment)
                L += beta * emitters.environment_radiance(ls.wi);
            else
                ++stats.zero;
            break;
        }
        if (emitters.is_emitter(next->triangle)) {
            float weight = 1.f;
            if (sampler.usable()) {
                float cos_l = std::fabs(dot(next->geometric_normal, ls.wi));
                float pdf_light = sampler.pdf_area_of(next->triangle) * next->t * next->t /
                                  std::max(cos_l, 1e-6f);
                weight = power_heuristic(ls.pdf, pdf_light);
            }
            L += beta * emitters.emission_of(next->triangle) * weight;
            break;
        }
        BrdfParams next_params = params_at(*next);
        if (config.use_radiance_cache && next_params.roughness > config.sigma_threshold) {
            auto v = cache.query(next->position);
            if (v)
                L += beta * (*v);
            else
                ++stats.zero;
            break;
        }
        if (depth + 1 >= config.rr_start_depth) {
            float q = std::min(0.95f, max_component(beta));
            if (rng.next_float() >= q) break;
            beta /= q;
        }
        wo = -ls.wi;
        hit = *next;
    }
    return L;
}

// Incident radiance for one first-vertex lobe sample during refinement.
template <typename ParamsFn>
Vec3 refined_radiance(const Scene& scene, const Bvh& bvh, const RadianceCache& cache,
                      ParamsFn&& params_at, const EmitterSet& emitters,
                      const EmitterSampler& sampler, const BakeConfig& config, const Vec3& pos,
                      const Vec3& geom_n, const Vec3& wi, float lobe_pdf, float scene_eps,
                      Pcg32& rng, SampleStats& stats) {
    ++stats.total;
    Ray ray;
    ray.origin = offset_origin(pos, geom_n, wi, scene_eps);
    ray.direction = wi;
    auto hit = intersect(bvh, scene.mesh, ray);
    if (!hit) {
        if (emitters.environment) return emitters.environment_radiance(wi);
        ++stats.zero;
        return Vec3(0.f);
    }
    if (emitters.is_emitter(hit->triangle)) {
        float weight = 1.f;
        if (sampler.usable()) {
            float cos_l = std::fabs(dot(hit->geometric_normal, wi));
            float pdf_light =
                sampler.pdf_area_of(hit->triangle) * hit->t * hit->t / std::max(cos_l, 1e-6f);
            weight = power_heuristic(lobe_pdf, pdf_light);
        }
        return emitters.emission_of(hit->triangle) * weight;
    }
    BrdfParams params = params_at(*hit);
    if (config.use_radiance_cache && params.roughness > config.sigma_threshold) {
        auto v = cache.query(hit->position);
        if (v) return *v;
        ++stats.zero;
        return Vec3(0.f);
    }
    return continuation_radiance(scene, bvh, cache, params_at, emitters, sampler, config, *hit,
                                 -wi, scene_eps, rng, stats);
}

// Direct-light contribution to a factored integral at the first vertex,
// weighted for MIS against the given lobe density.
template <typename LobePdfFn, typename GFn>
Vec3 first_vertex_light_sample(const Scene& scene, const Bvh& bvh, const EmitterSampler& sampler,
                               const Vec3& pos, const Vec3& geom_n, const Vec3& n,
                               LobePdfFn&& lobe_pdf, GFn&& g_of, float scene_eps, Pcg32& rng) {
    auto lp = sampler.sample(scene.mesh, rng.next_float(), rng.next_vec2());
    Vec3 to_light = lp.position - pos;
    float d2 = length_squared(to_light);
    if (d2 <= 1e-12f) return Vec3(0.f);
    float dist = std::sqrt(d2);
    Vec3 wi = to_light / dist;
    if (dot(n, wi) <= 0.f) return Vec3(0.f);
    float cos_l = std::fabs(dot(lp.normal, wi));
    if (cos_l <= 1e-6f) return Vec3(0.f);
    Ray shadow;
    shadow.origin = offset_origin(pos, geom_n, wi, scene_eps);
    shadow.direction = wi;
    shadow.t_max = dist - 2.f * scene_eps;
    if (shadow.t_max <= 0.f || intersect_any(bvh, scene.mesh, shadow)) return Vec3(0.f);
    float pdf_light = lp.pdf_area * d2 / cos_l;
    float weight = power_heuristic(pdf_light, lobe_pdf(wi));
    return lp.radiance * (g_of(wi) * weight / pdf_light);
}

}  // namespace detail_shading

template <typename ParamsFn>
ShadingBuffers refine(const Scene& scene, const Bvh& bvh, const RadianceCache& cache,
                      ParamsFn&& params_at, const EmitterSet& emitters, const BakeConfig& config,
                      uint64_t seed) {
    config.validate();
    float scene_eps = scene_epsilon_for(scene.aabb);
    float scene_diag = scene.aabb.diagonal();
    EmitterSampler sampler(scene.mesh, emitters);
    ShadingBuffers buffers;
    buffers.views.resize(scene.view_count());

    for (size_t v = 0; v < scene.view_count(); ++v) {
        const Camera& cam = scene.cameras[v];
        ViewShading& view = buffers.views[v];
        view.width = cam.width;
        view.height = cam.height;
        view.diffuse = HdrImage(cam.width, cam.height);
        for (int k = 0; k < kRoughnessLevels; ++k) {
            view.spec0[k] = HdrImage(cam.width, cam.height);
            view.spec1[k] = HdrImage(cam.width, cam.height);
        }
        view.hits.resize(static_cast<size_t>(cam.width) * cam.height);
        std::vector<detail_shading::SampleStats> tile_stats(
            static_cast<size_t>(cam.width) * cam.height);

        for_each_tile_pixel(cam.width, cam.height, config.threads, seed, v,
                            [&](int x, int y, Pcg32& rng) {
            size_t pix = static_cast<size_t>(y) * cam.width + x;
            auto hit = intersect(bvh, scene.mesh, cam.primary_ray(x, y));
            if (!hit) return;
            view.hits[pix] = {static_cast<int32_t>(hit->triangle), hit->position,
                              hit->shading_normal};
            Vec3 wo = -cam.primary_ray(x, y).direction;
            Vec3 n = hit->shading_normal;
            if (dot(n, wo) < 0.f) n = -n;
            detail_shading::SampleStats& stats = tile_stats[pix];

            // diffuse buffer
            Vec3 acc(0.f);
            for (int s = 0; s < config.spp_diffuse; ++s) {
                Vec3 wi = detail_brdf::to_world(
                    detail_brdf::sample_cosine_local(rng.next_vec2()), n);
                float pdf = pdf_cosine(wi, n);
                if (pdf <= 0.f) continue;
                Vec3 li = detail_shading::refined_radiance(scene, bvh, cache, params_at, emitters,
                                                           sampler, config, hit->position,
                                                           hit->geometric_normal, wi, pdf,
                                                           scene_eps, rng, stats);
                acc += li;  // g_d / pdf_cosine == 1
                if (sampler.usable()) {
                    acc += detail_shading::first_vertex_light_sample(
                        scene, bvh, sampler, hit->position, hit->geometric_normal, n,
                        [&](const Vec3& w) { return pdf_cosine(w, n); },
                        [&](const Vec3& w) { return std::max(0.f, dot(n, w)) * kInvPi; },
                        scene_eps, rng);
                }
            }
            view.diffuse.set(x, y, acc / static_cast<float>(config.spp_diffuse));

            for (int k = 0; k < kRoughnessLevels; ++k) {
                float sigma_k = roughness_knot(k);
                Vec3 acc0(0.f), acc1(0.f);
                for (int s = 0; s < config.spp_specular; ++s) {
                    Vec3 wi = sample_vndf(sigma_k, wo, n, rng.next_vec2());
                    float pdf = pdf_vndf(sigma_k, wi, wo, n);
                    if (pdf > 0.f) {
                        FactoredBrdf g = eval_factored(sigma_k, wi, wo, n);
                        if (g.g_s0 > 0.f || g.g_s1 > 0.f) {
                            Vec3 li = detail_shading::refined_radiance(
                                scene, bvh, cache, params_at, emitters, sampler, config,
                                hit->position, hit->geometric_normal, wi, pdf, scene_eps, rng,
                                stats);
                            acc0 += li * (g.g_s0 / pdf);
                            acc1 += li * (g.g_s1 / pdf);
                        } else {
                            ++stats.total;
                        }
                    } else {
                        ++stats.total;
                    }
                    if (sampler.usable()) {
                        auto lobe_pdf = [&](const Vec3& w) {
                            return pdf_vndf(sigma_k, w, wo, n);
                        };
                        acc0 += detail_shading::first_vertex_light_sample(
                            scene, bvh, sampler, hit->position, hit->geometric_normal, n,
                            lobe_pdf,
                            [&](const Vec3& w) { return eval_factored(sigma_k, w, wo, n).g_s0; },
                            scene_eps, rng);
                        acc1 += detail_shading::first_vertex_light_sample(
                            scene, bvh, sampler, hit->position, hit->geometric_normal, n,
                            lobe_pdf,
                            [&](const Vec3& w) { return eval_factored(sigma_k, w, wo, n).g_s1; },
                            scene_eps, rng);
                    }
                }
                view.spec0[k].set(x, y, acc0 / static_cast<float>(config.spp_specular));
                view.spec1[k].set(x, y, acc1 / static_cast<float>(config.spp_specular));
            }
        });

        for (const auto& s : tile_stats) {
            view.zero_radiance_samples += s.zero;
            view.total_samples += s.total;
        }
        if (config.denoise) denoise_view(view, scene_diag);
    }
    return buffers;
}

// ---------------------------------------------------------------------------
// Bake persistence: view_{i}/Ld.pfm, Ls0_{k}.pfm, Ls1_{k}.pfm, hits.bin plus a
// root manifest carrying config, seed and miss statistics.
// ---------------------------------------------------------------------------

inline void save_shading(const ShadingBuffers& buffers, const BakeConfig& config, uint64_t seed,
                         const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["seed"] = seed;
    manifest["config"] = {{"spp_diffuse", config.spp_diffuse},
                          {"spp_specular", config.spp_specular},
                          {"max_path_depth", config.max_path_depth},
                          {"sigma_threshold", config.sigma_threshold},
                          {"rr_start_depth", config.rr_start_depth},
                          {"throughput_clamp", config.throughput_clamp},
                          {"denoise", config.denoise},
                          {"use_radiance_cache", config.use_radiance_cache}};
    manifest["views"] = buffers.views.size();
    auto miss_rates = nlohmann::json::array();
    for (size_t v = 0; v < buffers.views.size(); ++v) {
        const ViewShading& view = buffers.views[v];
        char name[64];
        std::snprintf(name, sizeof(name), "view_%zu", v);
        fs::path vdir = fs::path(dir) / name;
        fs::create_directories(vdir);
        write_pfm(view.diffuse, (vdir / "Ld.pfm").string());
        for (int k = 0; k < kRoughnessLevels; ++k) {
            write_pfm(view.spec0[k], (vdir / ("Ls0_" + std::to_string(k) + ".pfm")).string());
            write_pfm(view.spec1[k], (vdir / ("Ls1_" + std::to_string(k) + ".pfm")).string());
        }
        std::ofstream hf((vdir / "hits.bin").string(), std::ios::binary);
        int32_t wh[2] = {view.width, view.height};
        hf.write(reinterpret_cast<const char*>(wh), sizeof(wh));
        for (const HitRecord& h : view.hits) {
            hf.write(reinterpret_cast<const char*>(&h.triangle), 4);
            float p[6] = {h.position.x, h.position.y, h.position.z,
                          h.normal.x, h.normal.y, h.normal.z};
            hf.write(reinterpret_cast<const char*>(p), sizeof(p));
        }
        if (!hf) throw std::runtime_error("save_shading: hits.bin write failed");
        miss_rates.push_back(view.miss_rate());
    }
    manifest["miss_rates"] = miss_rates;
    std::ofstream mf((fs::path(dir) / "manifest.json").string());
    mf << manifest.dump(1) << "\n";
    if (!mf) throw std::runtime_error("save_shading: manifest write failed");
}

inline ShadingBuffers load_shading(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf((fs::path(dir) / "manifest.json").string());
    if (!mf) throw std::runtime_error("load_shading: missing manifest in " + dir);
    nlohmann::json manifest;
    mf >> manifest;
    size_t n_views = manifest.at("views").get<size_t>();
    ShadingBuffers buffers;
    buffers.views.resize(n_views);
    for (size_t v = 0; v < n_views; ++v) {
        ViewShading& view = buffers.views[v];
        char name[64];
        std::snprintf(name, sizeof(name), "view_%zu", v);
        fs::path vdir = fs::path(dir) / name;
        view.diffuse = read_pfm((vdir / "Ld.pfm").string());
        view.width = view.diffuse.width;
        view.height = view.diffuse.height;
        for (int k = 0; k < kRoughnessLevels; ++k) {
            view.spec0[k] = read_pfm((vdir / ("Ls0_" + std::to_string(k) + ".pfm")).string());
            view.spec1[k] = read_pfm((vdir / ("Ls1_" + std::to_string(k) + ".pfm")).string());
        }
        std::ifstream hf((vdir / "hits.bin").string(), std::ios::binary);
        if (!hf) throw std::runtime_error("load_shading: missing hits.bin in " + vdir.string());
        int32_t wh[2];
        hf.read(reinterpret_cast<char*>(wh), sizeof(wh));
        if (wh[0] != view.width || wh[1] != view.height)
            throw std::runtime_error("load_shading: hits.bin dimension mismatch");
        view.hits.resize(static_cast<size_t>(view.width) * view.height);
        for (HitRecord& h : view.hits) {
            hf.read(reinterpret_cast<char*>(&h.triangle), 4);
            float p[6];
            hf.read(reinterpret_cast<char*>(p), sizeof(p));
            h.position = {p[0], p[1], p[2]};
            h.normal = {p[3], p[4], p[5]};
        }
        if (!hf) throw std::runtime_error("load_shading: truncated hits.bin");
    }
    return buffers;
}

}  // namespace fipt
