// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fipt/geometry.hpp"
#include "fipt/image.hpp"
#include "fipt/parallel.hpp"
#include "fipt/rng.hpp"
#include "fipt/scene.hpp"

namespace fipt {

// Equirectangular direction mapping, y-up: v follows polar angle from +y,
// u follows atan2(z, x).
inline Vec2 dir_to_equirect(const Vec3& d) {
    float u = (std::atan2(d.z, d.x) + kPi) / (2.f * kPi);
    float v = std::acos(clamp(d.y, -1.f, 1.f)) / kPi;
    return {clamp(u, 0.f, 1.f), clamp(v, 0.f, 1.f)};
}

inline Vec3 equirect_to_dir(float u, float v) {
    float phi = u * 2.f * kPi - kPi;
    float theta = v * kPi;
    float st = std::sin(theta);
    return {st * std::cos(phi), std::cos(theta), st * std::sin(phi)};
}

// Set of emitting triangles with constant per-triangle radiance, plus an
// optional environment map for escape rays. Emitters reflect nothing (f = 0).
struct EmitterSet {
    std::vector<uint32_t> triangles;  // sorted ascending
    std::vector<Vec3> radiance;       // parallel to triangles
    std::optional<HdrImage> environment;

    int index_of(uint32_t tri) const {
        auto it = std::lower_bound(triangles.begin(), triangles.end(), tri);
        if (it == triangles.end() || *it != tri) return -1;
        return static_cast<int>(it - triangles.begin());
    }
    bool is_emitter(uint32_t tri) const { return index_of(tri) >= 0; }
    Vec3 emission_of(uint32_t tri) const {
        int i = index_of(tri);
        return i >= 0 ? radiance[i] : Vec3(0.f);
    }
    bool empty() const { return triangles.empty() && !environment; }

    Vec3 environment_radiance(const Vec3& dir) const {
        if (!environment) return Vec3(0.f);
        Vec2 uv = dir_to_equirect(dir);
        int x = clamp(static_cast<int>(uv.x * environment->width), 0, environment->width - 1);
        int y = clamp(static_cast<int>(uv.y * environment->height), 0, environment->height - 1);
        return environment->at(x, y);
    }

    void sort_entries() {
        std::vector<size_t> order(triangles.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return triangles[a] < triangles[b]; });
        std::vector<uint32_t> t(triangles.size());
        std::vector<Vec3> r(radiance.size());
        for (size_t i = 0; i < order.size(); ++i) {
            t[i] = triangles[order[i]];
            r[i] = radiance[order[i]];
        }
        triangles = std::move(t);
        radiance = std::move(r);
    }
};

// A triangle is an emitter iff the mean of `samples_per_tri` uniform mask
// samples exceeds `threshold`. alpha_fn: Vec3 -> float in [0,1). Per-triangle
// RNG streams keep the decision independent of evaluation order.
template <typename AlphaFn>
std::vector<uint32_t> classify_emitters(const TriangleMesh& mesh, AlphaFn&& alpha_fn,
                                        int samples_per_tri = 100, float threshold = 0.01f,
                                        uint64_t seed = 0, int threads = 1) {
    size_t n = mesh.triangle_count();
    std::vector<uint8_t> flags(n, 0);
    parallel_for(static_cast<int64_t>(n), threads, [&](int64_t begin, int64_t end, int) {
        for (int64_t tri = begin; tri < end; ++tri) {
            Pcg32 rng(hash_combine(seed, 0x7f1c5e11u, static_cast<uint64_t>(tri)));
            double sum = 0.0;
            for (int s = 0; s < samples_per_tri; ++s) {
                Vec3 p = sample_triangle(mesh, static_cast<uint32_t>(tri), rng.next_vec2());
                sum += alpha_fn(p);
            }
            flags[tri] = (sum / samples_per_tri) > threshold ? 1 : 0;
        }
    });
    std::vector<uint32_t> out;
    for (size_t i = 0; i < n; ++i)
        if (flags[i]) out.push_back(static_cast<uint32_t>(i));
    return out;
}

namespace detail {

inline float median_inplace(std::vector<float>& v) {
    size_t n = v.size();
    auto mid = v.begin() + n / 2;
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    float hi = *mid;
    float lo = *std::max_element(v.begin(), mid);
    return 0.5f * (lo + hi);
}

}  // namespace detail

// Closed-form emission under the f = 0 assumption: per-channel median of
// every input pixel whose primary ray hits the triangle. Unobserved emitters
// get zero radiance; their count is returned for diagnostics.
inline int solve_emission(const Scene& scene, const Bvh& bvh, EmitterSet& emitters) {
    std::unordered_map<uint32_t, int> slot;
    for (size_t i = 0; i < emitters.triangles.size(); ++i)
        slot[emitters.triangles[i]] = static_cast<int>(i);
    std::vector<std::vector<float>> gathered[3];
    for (auto& g : gathered) g.resize(emitters.triangles.size());

    for (size_t v = 0; v < scene.view_count(); ++v) {
        const Camera& cam = scene.cameras[v];
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                auto hit = intersect(bvh, scene.mesh, cam.primary_ray(x, y));
                if (!hit) continue;
                auto it = slot.find(hit->triangle);
                if (it == slot.end()) continue;
                Vec3 c = scene.frames[v].at(x, y);
                gathered[0][it->second].push_back(c.x);
                gathered[1][it->second].push_back(c.y);
                gathered[2][it->second].push_back(c.z);
            }
        }
    }

    emitters.radiance.assign(emitters.triangles.size(), Vec3(0.f));
    int unobserved = 0;
    for (size_t i = 0; i < emitters.triangles.size(); ++i) {
        if (gathered[0][i].empty()) {
            ++unobserved;
            continue;
        }
        emitters.radiance[i] = {detail::median_inplace(gathered[0][i]),
                                detail::median_inplace(gathered[1][i]),
                                detail::median_inplace(gathered[2][i])};
    }
    return unobserved;
}

// Environment estimation for scenes with escape directions: every input
// pixel whose primary ray misses all geometry votes into an equirect texel;
// each texel takes the per-channel median, unobserved texels stay zero.
inline HdrImage solve_environment(const Scene& scene, const Bvh& bvh, int env_height = 64) {
    int w = 2 * env_height, h = env_height;
    std::vector<std::vector<float>> bins[3];
    for (auto& b : bins) b.resize(static_cast<size_t>(w) * h);

    for (size_t v = 0; v < scene.view_count(); ++v) {
        const Camera& cam = scene.cameras[v];
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = cam.primary_ray(x, y);
                if (intersect(bvh, scene.mesh, ray)) continue;
                Vec2 uv = dir_to_equirect(ray.direction);
                int tx = clamp(static_cast<int>(uv.x * w), 0, w - 1);
                int ty = clamp(static_cast<int>(uv.y * h), 0, h - 1);
                size_t t = static_cast<size_t>(ty) * w + tx;
                Vec3 c = scene.frames[v].at(x, y);
                bins[0][t].push_back(c.x);
                bins[1][t].push_back(c.y);
                bins[2][t].push_back(c.z);
            }
        }
    }

    HdrImage env(w, h, Vec3(0.f));
    for (size_t t = 0; t < static_cast<size_t>(w) * h; ++t) {
        if (bins[0][t].empty()) continue;
        env.set_index(t, {detail::median_inplace(bins[0][t]), detail::median_inplace(bins[1][t]),
                          detail::median_inplace(bins[2][t])});
    }
    return env;
}

inline void save_emitters(const EmitterSet& emitters, const std::string& json_path) {
    nlohmann::json j = nlohmann::json::array();
    for (size_t i = 0; i < emitters.triangles.size(); ++i) {
        j.push_back({{"tri", emitters.triangles[i]},
                     {"Le", {emitters.radiance[i].x, emitters.radiance[i].y,
                             emitters.radiance[i].z}}});
    }
    std::ofstream out(json_path);
    out << j.dump(1) << "\n";
    if (!out) throw std::runtime_error("save_emitters: write failed for " + json_path);
    if (emitters.environment) {
        auto env_path = std::filesystem::path(json_path).parent_path() / "env.pfm";
        write_pfm(*emitters.environment, env_path.string());
    }
}

inline EmitterSet load_emitters(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("load_emitters: cannot open " + json_path);
    nlohmann::json j;
    in >> j;
    EmitterSet set;
    for (const auto& e : j) {
        set.triangles.push_back(e.at("tri").get<uint32_t>());
        const auto& le = e.at("Le");
        set.radiance.push_back({le[0].get<float>(), le[1].get<float>(), le[2].get<float>()});
    }
    set.sort_entries();
    auto env_path = std::filesystem::path(json_path).parent_path() / "env.pfm";
    if (std::filesystem::exists(env_path)) set.environment = read_pfm(env_path.string());
    return set;
}

}  // namespace fipt
