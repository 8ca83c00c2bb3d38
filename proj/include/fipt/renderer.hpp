// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fipt/brdf.hpp"
#include "fipt/emitter.hpp"
#include "fipt/geometry.hpp"
#include "fipt/image.hpp"
#include "fipt/parallel.hpp"
#include "fipt/radiance_cache.hpp"
#include "fipt/rng.hpp"
#include "fipt/scene.hpp"
#include "fipt/tonemap.hpp"

namespace fipt {

struct RenderConfig {
    int spp = 1024;
    int max_depth = 8;
    int rr_start_depth = 3;
    uint64_t seed = 0;
    float gamma = 1.f / 2.2f;  // metric-space tone mapping
    int threads = 1;
};

inline float power_heuristic(float pdf_a, float pdf_b) {
    float a2 = pdf_a * pdf_a;
    float denom = a2 + pdf_b * pdf_b;
    return denom > 0.f ? a2 / denom : 0.f;
}

// Area sampling over emitter triangles, weighted by area * luminance(L_e).
class EmitterSampler {
public:
    EmitterSampler() = default;
    EmitterSampler(const TriangleMesh& mesh, const EmitterSet& set) : set_(&set) {
        cdf_.reserve(set.triangles.size());
        double acc = 0.0;
        for (size_t i = 0; i < set.triangles.size(); ++i) {
            float w = mesh.areas[set.triangles[i]] * std::max(luminance(set.radiance[i]), 1e-6f);
            acc += w;
            cdf_.push_back(static_cast<float>(acc));
        }
        total_ = static_cast<float>(acc);
        areas_.reserve(set.triangles.size());
        for (uint32_t t : set.triangles) areas_.push_back(mesh.areas[t]);
    }

    bool usable() const { return set_ && total_ > 0.f && !cdf_.empty(); }

    struct LightPoint {
        uint32_t triangle;
        Vec3 position;
        Vec3 normal;  // geometric, unflipped
        Vec3 radiance;
        float pdf_area;  // joint density over the emitter surface
    };

    LightPoint sample(const TriangleMesh& mesh, float u_select, Vec2 u_point) const {
        float target = u_select * total_;
        size_t k = std::lower_bound(cdf_.begin(), cdf_.end(), target) - cdf_.begin();
        if (k >= cdf_.size()) k = cdf_.size() - 1;
        float prob = (cdf_[k] - (k == 0 ? 0.f : cdf_[k - 1])) / total_;
        LightPoint lp;
        lp.triangle = set_->triangles[k];
        lp.position = sample_triangle(mesh, lp.triangle, u_point);
        lp.normal = mesh.geometric_normal(lp.triangle);
        lp.radiance = set_->radiance[k];
        lp.pdf_area = prob / std::max(areas_[k], 1e-20f);
        return lp;
    }

    // Density of hitting this particular triangle point via light sampling.
    float pdf_area_of(uint32_t tri) const {
        int i = set_->index_of(tri);
        if (i < 0) return 0.f;
        float prob = (cdf_[i] - (i == 0 ? 0.f : cdf_[i - 1])) / total_;
        return prob / std::max(areas_[i], 1e-20f);
    }

private:
    const EmitterSet* set_ = nullptr;
    std::vector<float> cdf_;
    std::vector<float> areas_;
    float total_ = 0.f;
};

namespace detail_render {

// One path sample. Next-event estimation with the power heuristic against
// BRDF sampling; emitters terminate paths (f = 0 on emitters) and escape
// rays query the environment (BRDF-sampled only, so weight 1).
template <typename MaterialFn>
Vec3 trace_path(const TriangleMesh& mesh, const Bvh& bvh, MaterialFn&& material,
                const EmitterSet& emitters, const EmitterSampler& sampler, Ray ray,
                const RenderConfig& config, float scene_eps, Pcg32& rng,
                std::atomic<uint64_t>* escape_count = nullptr,
                const Vec3* first_bounce_u = nullptr) {
    Vec3 L(0.f);
    Vec3 beta(1.f);
    float prev_brdf_pdf = 0.f;

    for (int depth = 0; depth < config.max_depth; ++depth) {
        auto hit = intersect(bvh, mesh, ray);
        if (!hit) {
            if (emitters.environment) {
                L += beta * emitters.environment_radiance(ray.direction);
            } else if (escape_count) {
                escape_count->fetch_add(1, std::memory_order_relaxed);
            }
            break;
        }
        if (emitters.is_emitter(hit->triangle)) {
            float weight = 1.f;
            if (depth > 0 && sampler.usable()) {
                float cos_l = std::fabs(dot(hit->geometric_normal, ray.direction));
                float pdf_light =
                    sampler.pdf_area_of(hit->triangle) * hit->t * hit->t / std::max(cos_l, 1e-6f);
                weight = power_heuristic(prev_brdf_pdf, pdf_light);
            }
            L += beta * emitters.emission_of(hit->triangle) * weight;
            break;
        }

        BrdfParams params = material(*hit);
        Vec3 wo = -ray.direction;
        Vec3 n = hit->shading_normal;
        if (dot(n, wo) < 0.f) n = -n;

        if (sampler.usable()) {
            float u_sel = rng.next_float();
            Vec2 u_pt = rng.next_vec2();
            auto lp = sampler.sample(mesh, u_sel, u_pt);
            Vec3 to_light = lp.position - hit->position;
            float d2 = length_squared(to_light);
            if (d2 > 1e-12f) {
                float dist = std::sqrt(d2);
                Vec3 wi = to_light / dist;
                float cos_s = dot(n, wi);
                float cos_l = std::fabs(dot(lp.normal, wi));  // two-sided emitters
                if (cos_s > 0.f && cos_l > 1e-6f) {
                    Ray shadow;
                    shadow.origin = offset_origin(hit->position, hit->geometric_normal, wi, scene_eps);
                    shadow.direction = wi;
                    shadow.t_min = 0.f;
                    shadow.t_max = dist - 2.f * scene_eps;
                    if (shadow.t_max > 0.f && !intersect_any(bvh, mesh, shadow)) {
                        float pdf_light = lp.pdf_area * d2 / cos_l;
                        Vec3 f = eval_brdf(params, wi, wo, n);
                        float pdf_b = pdf_brdf(params, wo, n, wi);
                        float weight = power_heuristic(pdf_light, pdf_b);
                        L += beta * f * lp.radiance * (weight / pdf_light);
                    }
                }
            }
        }

        Vec3 u3 = rng.next_vec3();
        if (depth == 0 && first_bounce_u) u3 = *first_bounce_u;
        LobeSample ls = sample_brdf(params, wo, n, u3);
        if (ls.pdf <= 0.f) break;
        Vec3 f = eval_brdf(params, ls.wi, wo, n);
        beta *= f / ls.pdf;
        prev_brdf_pdf = ls.pdf;
        if (max_component(beta) <= 0.f) break;

        if (depth + 1 >= config.rr_start_depth) {
            float q = std::min(0.95f, max_component(beta));
            if (rng.next_float() >= q) break;
            beta /= q;
        }
        ray.origin = offset_origin(hit->position, hit->geometric_normal, ls.wi, scene_eps);
        ray.direction = ls.wi;
        ray.t_min = 0.f;
        ray.t_max = kInf;
    }
    return L;
}

}  // namespace detail_render

struct RenderStats {
    uint64_t escaped_rays = 0;  // escapes in a closed scene indicate leaks
};

// Tile-parallel unbiased path tracer. Tiles own RNG streams derived from
// (seed, salt, tile), so output is bit-identical for any thread count.
template <typename MaterialFn>
HdrImage path_trace(const TriangleMesh& mesh, const Bvh& bvh, const Aabb& scene_bounds,
                    MaterialFn&& material, const EmitterSet& emitters, const Camera& camera,
                    const RenderConfig& config, uint64_t stream_salt = 0,
                    RenderStats* stats = nullptr) {
    if (emitters.empty())
        throw std::runtime_error("path_trace: no emitters and no environment");
    EmitterSampler sampler(mesh, emitters);
    float scene_eps = scene_epsilon_for(scene_bounds);
    HdrImage image(camera.width, camera.height);
    std::atomic<uint64_t> escapes{0};

    constexpr int kTile = 16;
    int tiles_x = (camera.width + kTile - 1) / kTile;
    int tiles_y = (camera.height + kTile - 1) / kTile;
    parallel_items(static_cast<int64_t>(tiles_x) * tiles_y, config.threads, [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        Pcg32 rng(hash_combine(config.seed, stream_salt, static_cast<uint64_t>(tile)));
        // first-bounce samples are stratified per pixel (lobe selector over
        // spp bins, 2D lobe sample over a square grid); later bounces stay
        // independent
        int strata_side = static_cast<int>(std::sqrt(static_cast<double>(config.spp)));
        int strata = strata_side * strata_side;
        for (int y = ty * kTile; y < std::min((ty + 1) * kTile, camera.height); ++y) {
            for (int x = tx * kTile; x < std::min((tx + 1) * kTile, camera.width); ++x) {
                Vec3 acc(0.f);
                for (int s = 0; s < config.spp; ++s) {
                    Ray ray = camera.primary_ray(x, y, rng.next_vec2());
                    Vec3 su = rng.next_vec3();
                    su.x = (s + su.x) / config.spp;
                    if (s < strata) {
                        su.y = (s % strata_side + su.y) / strata_side;
                        su.z = (s / strata_side + su.z) / strata_side;
                    }
                    acc += detail_render::trace_path(mesh, bvh, material, emitters, sampler, ray,
                                                     config, scene_eps, rng,
                                                     stats ? &escapes : nullptr, &su);
                }
                image.set(x, y, acc / static_cast<float>(config.spp));
            }
        }
    });
    if (stats) stats->escaped_rays = escapes.load();
    return image;
}

// Monte Carlo estimate of the directional albedo integral(f dwi) at a
// surface point, the a' material-reflectance metric.
inline Vec3 estimate_albedo_integral(const BrdfParams& params, const Vec3& wo, const Vec3& n,
                                     Pcg32& rng, int samples = 128) {
    Vec3 acc(0.f);
    int strata_side = static_cast<int>(std::sqrt(static_cast<double>(samples)));
    int strata = strata_side * strata_side;
    for (int s = 0; s < samples; ++s) {
        Vec3 u = rng.next_vec3();
        u.x = (s + u.x) / samples;
        if (s < strata) {
            u.y = (s % strata_side + u.y) / strata_side;
            u.z = (s / strata_side + u.z) / strata_side;
        }
        LobeSample ls = sample_brdf(params, wo, n, u);
        if (ls.pdf <= 0.f) continue;
        acc += eval_brdf(params, ls.wi, wo, n) / ls.pdf;
    }
    return acc / static_cast<float>(samples);
}

// ---------------------------------------------------------------------------
// Procedural box scenes with ground-truth materials, lights and label maps.
// ---------------------------------------------------------------------------

struct GtMaterial {
    Vec3 albedo{0.5f, 0.5f, 0.5f};
    float metallic = 0.f;
    float roughness = 1.f;
    bool checker = false;
    Vec3 albedo2{0.2f, 0.2f, 0.2f};
    float checker_scale = 0.5f;  // meters per checker cell
};

struct GtQuadSpec {
    std::string wall;        // floor/ceiling/left/right/back/front
    Vec2 center{0.5f, 0.5f};  // in wall UV
    Vec2 size{0.3f, 0.3f};    // in meters
    float inset = 0.01f;      // offset toward the interior
    GtMaterial material;      // panels only
    Vec3 radiance{0.f};       // lights only
};

struct GtSceneSpec {
    Vec3 box_size{2.f, 2.f, 2.f};
    int width = 128, height = 128;
    int views = 60;
    uint64_t camera_seed = 7;
    int spp = 256;
    std::map<std::string, GtMaterial> walls;  // defaults applied per wall
    std::vector<GtQuadSpec> panels;
    std::vector<GtQuadSpec> lights;
    std::string open_wall;  // removed wall ("" keeps the box closed)
    Vec3 env_radiance{0.f};  // only meaningful with an open wall
};

// Built scene plus everything needed to render and grade it.
struct GtScene {
    Scene scene;  // frames filled by gen_synthetic
    std::vector<GtMaterial> part_materials;  // indexed by part id
    EmitterSet emitters;
    std::vector<uint32_t> panel_parts;  // part ids of specular panels
};

namespace detail_gt {

struct WallFrame {
    Vec3 origin;  // uv (0,0) corner
    Vec3 u_axis, v_axis;  // unit, scaled by wall extent when building quads
    Vec3 inward;  // interior-facing normal
    float u_len, v_len;
};

inline WallFrame wall_frame(const std::string& name, const Vec3& b) {
    // box spans x in [-bx/2, bx/2], y in [0, by], z in [-bz/2, bz/2]
    float hx = b.x * 0.5f, hz = b.z * 0.5f;
    if (name == "floor")
        return {{-hx, 0.f, -hz}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, b.x, b.z};
    if (name == "ceiling")
        return {{-hx, b.y, hz}, {1, 0, 0}, {0, 0, -1}, {0, -1, 0}, b.x, b.z};
    if (name == "left")
        return {{-hx, 0.f, hz}, {0, 0, -1}, {0, 1, 0}, {1, 0, 0}, b.z, b.y};
    if (name == "right")
        return {{hx, 0.f, -hz}, {0, 0, 1}, {0, 1, 0}, {-1, 0, 0}, b.z, b.y};
    if (name == "back")
        return {{-hx, 0.f, hz}, {1, 0, 0}, {0, 1, 0}, {0, 0, -1}, b.x, b.y};
    if (name == "front")
        return {{hx, 0.f, -hz}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 1}, b.x, b.y};
    throw std::runtime_error("gt scene: unknown wall '" + name + "'");
}

inline void add_quad(TriangleMesh& mesh, const Vec3& p0, const Vec3& u_edge, const Vec3& v_edge,
                     const Vec3& normal, std::vector<uint16_t>& tri_parts, uint16_t part) {
    uint32_t base = static_cast<uint32_t>(mesh.positions.size());
    mesh.positions.push_back(p0);
    mesh.positions.push_back(p0 + u_edge);
    mesh.positions.push_back(p0 + u_edge + v_edge);
    mesh.positions.push_back(p0 + v_edge);
    for (int i = 0; i < 4; ++i) mesh.normals.push_back(normal);
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
    tri_parts.push_back(part);
    tri_parts.push_back(part);
}

}  // namespace detail_gt

inline GtScene build_gt_scene(const GtSceneSpec& spec) {
    GtScene gt;
    TriangleMesh& mesh = gt.scene.mesh;
    std::vector<uint16_t>& parts = gt.scene.part_labels;

    static const char* kWalls[6] = {"floor", "ceiling", "left", "right", "back", "front"};
    gt.part_materials.emplace_back();  // part 0 unused
    std::map<std::string, uint16_t> wall_part;
    for (const char* w : kWalls) {
        if (spec.open_wall == w) continue;
        auto frame = detail_gt::wall_frame(w, spec.box_size);
        uint16_t part = static_cast<uint16_t>(gt.part_materials.size());
        auto mit = spec.walls.find(w);
        gt.part_materials.push_back(mit != spec.walls.end() ? mit->second : GtMaterial{});
        wall_part[w] = part;
        detail_gt::add_quad(mesh, frame.origin, frame.u_axis * frame.u_len,
                            frame.v_axis * frame.v_len, frame.inward, parts, part);
    }
    auto add_inset_quad = [&](const GtQuadSpec& q, uint16_t part) {
        auto frame = detail_gt::wall_frame(q.wall, spec.box_size);
        Vec3 center = frame.origin + frame.u_axis * (q.center.x * frame.u_len) +
                      frame.v_axis * (q.center.y * frame.v_len) + frame.inward * q.inset;
        Vec3 p0 = center - frame.u_axis * (0.5f * q.size.x) - frame.v_axis * (0.5f * q.size.y);
        detail_gt::add_quad(mesh, p0, frame.u_axis * q.size.x, frame.v_axis * q.size.y,
                            frame.inward, parts, part);
    };
    for (const auto& p : spec.panels) {
        uint16_t part = static_cast<uint16_t>(gt.part_materials.size());
        gt.part_materials.push_back(p.material);
        gt.panel_parts.push_back(part);
        add_inset_quad(p, part);
    }
    for (const auto& l : spec.lights) {
        uint16_t part = static_cast<uint16_t>(gt.part_materials.size());
        GtMaterial lm;
        lm.albedo = Vec3(0.f);
        gt.part_materials.push_back(lm);
        uint32_t first_tri = static_cast<uint32_t>(mesh.triangles.size());
        add_inset_quad(l, part);
        for (uint32_t t = first_tri; t < mesh.triangles.size(); ++t) {
            gt.emitters.triangles.push_back(t);
            gt.emitters.radiance.push_back(l.radiance);
        }
    }
    if (!spec.open_wall.empty() && max_component(spec.env_radiance) > 0.f) {
        HdrImage env(1, 1, spec.env_radiance);
        gt.emitters.environment = env;
    }
    gt.emitters.sort_entries();
    mesh.compute_areas();

    // semantic labels: all reflective surfaces share one class, lights another
    gt.scene.semantic_labels.resize(parts.size());
    for (size_t i = 0; i < parts.size(); ++i)
        gt.scene.semantic_labels[i] =
            std::any_of(gt.emitters.triangles.begin(), gt.emitters.triangles.end(),
                        [&](uint32_t t) { return t == i; })
                ? 2
                : 1;

    Aabb mb = mesh.bounds();
    float pad = std::max(1e-3f * mb.diagonal(), 1e-4f);
    gt.scene.aabb.lo = mb.lo - Vec3(pad);
    gt.scene.aabb.hi = mb.hi + Vec3(pad);

    // cameras: interior positions looking about the room center, following
    // a randomized yaw/pitch capture pattern
    Pcg32 rng(hash_combine(spec.camera_seed, 0xca11u));
    Vec3 room_center{0.f, spec.box_size.y * 0.5f, 0.f};
    for (int v = 0; v < spec.views; ++v) {
        Camera cam;
        cam.width = spec.width;
        cam.height = spec.height;
        cam.fx = cam.fy = 0.8f * spec.width;  // ~64 deg horizontal fov
        cam.cx = 0.5f * spec.width;
        cam.cy = 0.5f * spec.height;
        Vec3 pos{(rng.next_float() - 0.5f) * 0.55f * spec.box_size.x,
                 spec.box_size.y * (0.3f + 0.45f * rng.next_float()),
                 (rng.next_float() - 0.5f) * 0.55f * spec.box_size.z};
        Vec3 to_center = room_center - pos;
        float base_yaw = std::atan2(to_center.x, to_center.z);
        float yaw = base_yaw + (rng.next_float() * 2.f - 1.f) * (60.f * kPi / 180.f);
        float pitch = (rng.next_float() * 2.f - 1.f) * (45.f * kPi / 180.f);
        Vec3 forward{std::sin(yaw) * std::cos(pitch), std::sin(pitch),
                     std::cos(yaw) * std::cos(pitch)};
        cam.to_world = look_at(pos, pos + forward);
        gt.scene.cameras.push_back(cam);
    }
    return gt;
}

// Ground-truth material lookup with optional checkerboard albedo.
inline BrdfParams gt_params_at(const GtScene& gt, const Hit& hit) {
    uint16_t part = gt.scene.part_labels[hit.triangle];
    const GtMaterial& m = gt.part_materials[part];
    BrdfParams p;
    p.base_color = m.albedo;
    p.metallic = m.metallic;
    p.roughness = m.roughness;
    if (m.checker) {
        const Vec3& pos = hit.position;
        Vec3 n = abs(hit.geometric_normal);
        float a, b;
        if (n.x >= n.y && n.x >= n.z) {
            a = pos.y;
            b = pos.z;
        } else if (n.y >= n.z) {
            a = pos.x;
            b = pos.z;
        } else {
            a = pos.x;
            b = pos.y;
        }
        int pa = static_cast<int>(std::floor(a / m.checker_scale));
        int pb = static_cast<int>(std::floor(b / m.checker_scale));
        if ((pa + pb) & 1) p.base_color = m.albedo2;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline constexpr double kPsnrCap = 99.0;

// PSNR over gamma tone-mapped maps; mask selects contributing pixels.
inline double psnr_masked(const HdrImage& pred, const HdrImage& gt,
                          const std::vector<uint8_t>& mask, float gamma = 1.f / 2.2f) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::runtime_error("psnr: shape mismatch");
    double se = 0.0;
    uint64_t count = 0;
    for (size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!mask.empty() && !mask[p]) continue;
        Vec3 a = gamma_encode(pred.at_index(p), gamma);
        Vec3 b = gamma_encode(gt.at_index(p), gamma);
        Vec3 d = a - b;
        se += d.x * d.x + d.y * d.y + d.z * d.z;
        count += 3;
    }
    if (count == 0) return kPsnrCap;
    double mse = se / static_cast<double>(count);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline double psnr(const HdrImage& pred, const HdrImage& gt, float gamma = 1.f / 2.2f) {
    return psnr_masked(pred, gt, {}, gamma);
}

inline double emitter_iou(const std::vector<uint32_t>& pred, const std::vector<uint32_t>& gt) {
    std::vector<uint32_t> p = pred, g = gt;
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<uint32_t> inter, uni;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(inter));
    std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(uni));
    if (uni.empty()) return 1.0;
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// Mean over emitter pixels (union of predicted and ground-truth emitter
// masks) of squared log(1+x) differences.
inline double emission_log_l2(const HdrImage& pred, const HdrImage& gt,
                              const std::vector<uint8_t>& pred_mask,
                              const std::vector<uint8_t>& gt_mask) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::runtime_error("emission_log_l2: shape mismatch");
    double se = 0.0;
    uint64_t count = 0;
    for (size_t p = 0; p < pred.pixel_count(); ++p) {
        bool in_pred = pred_mask.empty() ? false : pred_mask[p] != 0;
        bool in_gt = gt_mask.empty() ? false : gt_mask[p] != 0;
        if (!in_pred && !in_gt) continue;
        for (int c = 0; c < 3; ++c) {
            double d = std::log(1.0 + static_cast<double>(pred.at_index(p)[c])) -
                       std::log(1.0 + static_cast<double>(gt.at_index(p)[c]));
            se += d * d;
        }
        count += 3;
    }
    return count == 0 ? 0.0 : se / static_cast<double>(count);
}

struct MetricsReport {
    double psnr_kd = 0.0;
    double psnr_aprime = 0.0;
    double psnr_sigma = 0.0;
    double emitter_iou = 0.0;
    double emission_logl2 = 0.0;

    nlohmann::json to_json() const {
        return {{"psnr_kd", psnr_kd},
                {"psnr_aprime", psnr_aprime},
                {"psnr_sigma", psnr_sigma},
                {"emitter_iou", emitter_iou},
                {"emission_logl2", emission_logl2}};
    }
};

// ---------------------------------------------------------------------------
// Per-view material/emission maps (used both for ground truth and for
// grading a recovered field with the same code path).
// ---------------------------------------------------------------------------

struct MaterialMaps {
    HdrImage kd;      // diffuse reflectance
    HdrImage sigma;   // roughness, gray
    HdrImage aprime;  // directional albedo integral(f dwi), 128-sample MC
};

template <typename MaterialFn>
MaterialMaps render_material_maps(const TriangleMesh& mesh, const Bvh& bvh, MaterialFn&& material,
                                  const Camera& camera, int aprime_spp, uint64_t seed,
                                  int threads = 1) {
    MaterialMaps maps;
    maps.kd = HdrImage(camera.width, camera.height);
    maps.sigma = HdrImage(camera.width, camera.height);
    maps.aprime = HdrImage(camera.width, camera.height);
    constexpr int kTile = 16;
    int tiles_x = (camera.width + kTile - 1) / kTile;
    int tiles_y = (camera.height + kTile - 1) / kTile;
    parallel_items(static_cast<int64_t>(tiles_x) * tiles_y, threads, [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        Pcg32 rng(hash_combine(seed, 0xaa0eu, static_cast<uint64_t>(tile)));
        for (int y = ty * kTile; y < std::min((ty + 1) * kTile, camera.height); ++y) {
            for (int x = tx * kTile; x < std::min((tx + 1) * kTile, camera.width); ++x) {
                Ray ray = camera.primary_ray(x, y);
                auto hit = intersect(bvh, mesh, ray);
                if (!hit) continue;
                BrdfParams p = material(*hit);
                maps.kd.set(x, y, coeffs(p.base_color, p.metallic).k_d);
                maps.sigma.set(x, y, Vec3(p.roughness));
                Vec3 wo = -ray.direction;
                Vec3 n = hit->shading_normal;
                if (dot(n, wo) < 0.f) n = -n;
                maps.aprime.set(x, y, estimate_albedo_integral(p, wo, n, rng, aprime_spp));
            }
        }
    });
    return maps;
}

struct EmissionMaps {
    HdrImage mask;      // 1 where the primary hit is an emitter triangle
    HdrImage emission;  // its radiance
};

inline EmissionMaps render_emission_maps(const TriangleMesh& mesh, const Bvh& bvh,
                                         const EmitterSet& emitters, const Camera& camera) {
    EmissionMaps maps;
    maps.mask = HdrImage(camera.width, camera.height);
    maps.emission = HdrImage(camera.width, camera.height);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            auto hit = intersect(bvh, mesh, camera.primary_ray(x, y));
            if (!hit || !emitters.is_emitter(hit->triangle)) continue;
            maps.mask.set(x, y, Vec3(1.f));
            maps.emission.set(x, y, emitters.emission_of(hit->triangle));
        }
    }
    return maps;
}

inline std::vector<uint8_t> mask_to_bytes(const HdrImage& mask) {
    std::vector<uint8_t> out(mask.pixel_count());
    for (size_t p = 0; p < mask.pixel_count(); ++p) out[p] = mask.at_index(p).x > 0.5f ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation: renders all views, writes the scene
// descriptor with label maps, and emits per-view ground-truth buffers.
// ---------------------------------------------------------------------------

inline GtMaterial gt_material_from_json(const nlohmann::json& j) {
    GtMaterial m;
    if (j.contains("albedo")) {
        const auto& a = j["albedo"];
        m.albedo = {a[0].get<float>(), a[1].get<float>(), a[2].get<float>()};
    }
    m.metallic = j.value("metallic", 0.f);
    m.roughness = j.value("roughness", 1.f);
    if (j.contains("albedo2")) {
        m.checker = true;
        const auto& a = j["albedo2"];
        m.albedo2 = {a[0].get<float>(), a[1].get<float>(), a[2].get<float>()};
        m.checker_scale = j.value("checker_scale", 0.5f);
    }
    return m;
}

inline GtSceneSpec gt_spec_from_json(const nlohmann::json& j) {
    GtSceneSpec spec;
    if (j.contains("box")) {
        const auto& b = j["box"];
        spec.box_size = {b[0].get<float>(), b[1].get<float>(), b[2].get<float>()};
    }
    if (j.contains("resolution")) {
        spec.width = j["resolution"][0].get<int>();
        spec.height = j["resolution"][1].get<int>();
    }
    spec.views = j.value("views", 60);
    spec.camera_seed = j.value("camera_seed", uint64_t(7));
    spec.spp = j.value("spp", 256);
    spec.open_wall = j.value("open_wall", std::string());
    if (j.contains("env_radiance")) {
        const auto& e = j["env_radiance"];
        spec.env_radiance = {e[0].get<float>(), e[1].get<float>(), e[2].get<float>()};
    }
    if (j.contains("walls"))
        for (const auto& [name, mat] : j["walls"].items())
            spec.walls[name] = gt_material_from_json(mat);
    auto parse_quad = [](const nlohmann::json& q) {
        GtQuadSpec quad;
        quad.wall = q.at("wall").get<std::string>();
        if (q.contains("center"))
            quad.center = {q["center"][0].get<float>(), q["center"][1].get<float>()};
        if (q.contains("size")) quad.size = {q["size"][0].get<float>(), q["size"][1].get<float>()};
        quad.inset = q.value("inset", 0.01f);
        if (q.contains("material")) quad.material = gt_material_from_json(q["material"]);
        if (q.contains("radiance")) {
            const auto& r = q["radiance"];
            quad.radiance = {r[0].get<float>(), r[1].get<float>(), r[2].get<float>()};
        }
        return quad;
    };
    if (j.contains("panels"))
        for (const auto& q : j["panels"]) spec.panels.push_back(parse_quad(q));
    if (j.contains("lights"))
        for (const auto& q : j["lights"]) spec.lights.push_back(parse_quad(q));
    return spec;
}

inline GtSceneSpec load_gt_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_gt_spec: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return gt_spec_from_json(j);
}

// Renders the dataset and writes scene.json + frames + label maps + gt/.
// Returns the built scene with frames filled, for in-process use.
inline GtScene gen_synthetic(const GtSceneSpec& spec, const std::string& out_dir, int threads = 1,
                             uint64_t render_seed = 1) {
    namespace fs = std::filesystem;
    if (spec.lights.empty() && max_component(spec.env_radiance) <= 0.f)
        throw std::runtime_error("gen_synthetic: spec has no emitters");
    if (spec.views < 1) throw std::runtime_error("gen_synthetic: needs at least one view");
    GtScene gt = build_gt_scene(spec);
    Bvh bvh = build_bvh(gt.scene.mesh);
    auto material = [&gt](const Hit& hit) { return gt_params_at(gt, hit); };

    RenderConfig rc;
    rc.spp = spec.spp;
    rc.seed = render_seed;
    rc.threads = threads;
    for (size_t v = 0; v < gt.scene.cameras.size(); ++v)
        gt.scene.frames.push_back(path_trace(gt.scene.mesh, bvh, gt.scene.aabb, material,
                                             gt.emitters, gt.scene.cameras[v], rc, v));

    save_scene(gt.scene, out_dir);

    fs::path gt_dir = fs::path(out_dir) / "gt";
    fs::create_directories(gt_dir);
    for (size_t v = 0; v < gt.scene.cameras.size(); ++v) {
        char name[64];
        std::snprintf(name, sizeof(name), "view_%04zu", v);
        fs::path vdir = gt_dir / name;
        fs::create_directories(vdir);
        MaterialMaps mm = render_material_maps(gt.scene.mesh, bvh, material, gt.scene.cameras[v],
                                               128, hash_combine(render_seed, 0xa9, v), threads);
        write_pfm(mm.kd, (vdir / "kd.pfm").string());
        write_pfm(mm.sigma, (vdir / "sigma.pfm").string());
        write_pfm(mm.aprime, (vdir / "aprime.pfm").string());
        EmissionMaps em = render_emission_maps(gt.scene.mesh, bvh, gt.emitters,
                                               gt.scene.cameras[v]);
        write_pfm(em.mask, (vdir / "emission_mask.pfm").string());
        write_pfm(em.emission, (vdir / "emission.pfm").string());
    }
    save_emitters(gt.emitters, (gt_dir / "emitters.json").string());

    nlohmann::json info;
    info["views"] = spec.views;
    info["panel_parts"] = gt.panel_parts;
    auto mats = nlohmann::json::array();
    for (const auto& m : gt.part_materials)
        mats.push_back({{"albedo", {m.albedo.x, m.albedo.y, m.albedo.z}},
                        {"metallic", m.metallic},
                        {"roughness", m.roughness}});
    info["part_materials"] = mats;
    std::ofstream inf((gt_dir / "info.json").string());
    inf << info.dump(1) << "\n";
    return gt;
}

// Render with an extra mesh unioned into the scene. The inserted object can
// be reflective (params) or emissive (extra_emission > 0 turns every inserted
// triangle into an area light).
template <typename MaterialFn>
HdrImage insert_object(const Scene& scene, MaterialFn&& base_material,
                       const EmitterSet& emitters, const TriangleMesh& extra,
                       const BrdfParams& extra_params, const Vec3& extra_emission,
                       const Camera& camera, const RenderConfig& config,
                       uint64_t stream_salt = 0x1e5e7ull) {
    TriangleMesh merged = scene.mesh;
    uint32_t base_verts = static_cast<uint32_t>(merged.positions.size());
    uint32_t base_tris = static_cast<uint32_t>(merged.triangles.size());
    merged.positions.insert(merged.positions.end(), extra.positions.begin(),
                            extra.positions.end());
    merged.normals.insert(merged.normals.end(), extra.normals.begin(), extra.normals.end());
    for (const auto& t : extra.triangles)
        merged.triangles.push_back({t[0] + base_verts, t[1] + base_verts, t[2] + base_verts});
    merged.compute_areas();

    EmitterSet merged_emitters = emitters;
    if (max_component(extra_emission) > 0.f) {
        for (uint32_t t = base_tris; t < merged.triangles.size(); ++t) {
            merged_emitters.triangles.push_back(t);
            merged_emitters.radiance.push_back(extra_emission);
        }
        merged_emitters.sort_entries();
    }

    Bvh bvh = build_bvh(merged);
    Aabb bounds = merged.bounds();
    auto material = [&](const Hit& hit) -> BrdfParams {
        if (hit.triangle < base_tris) {
            Hit h = hit;
            return base_material(h);
        }
        return extra_params;
    };
    return path_trace(merged, bvh, bounds, material, merged_emitters, camera, config,
                      stream_salt);
}

}  // namespace fipt
