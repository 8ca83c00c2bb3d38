// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "fipt/geometry.hpp"
#include "fipt/parallel.hpp"
#include "fipt/scene.hpp"

namespace fipt {

// Voxelized surface light field: mean observed outgoing radiance of all input
// pixels whose primary rays land in each voxel. View-independent by
// construction; only occupied voxels are stored.
class RadianceCache {
public:
    int resolution = 256;
    Aabb bounds;
    std::unordered_map<uint64_t, Vec3> voxels;

    uint64_t voxel_index(const Vec3& p) const {
        Vec3 ext = bounds.extent();
        int ix = clamp(static_cast<int>((p.x - bounds.lo.x) / ext.x * resolution), 0, resolution - 1);
        int iy = clamp(static_cast<int>((p.y - bounds.lo.y) / ext.y * resolution), 0, resolution - 1);
        int iz = clamp(static_cast<int>((p.z - bounds.lo.z) / ext.z * resolution), 0, resolution - 1);
        return static_cast<uint64_t>(ix) +
               static_cast<uint64_t>(resolution) *
                   (static_cast<uint64_t>(iy) + static_cast<uint64_t>(resolution) * iz);
    }

    Vec3 voxel_center(uint64_t index) const {
        uint64_t n = static_cast<uint64_t>(resolution);
        int ix = static_cast<int>(index % n);
        int iy = static_cast<int>((index / n) % n);
        int iz = static_cast<int>(index / (n * n));
        Vec3 ext = bounds.extent();
        return {bounds.lo.x + (ix + 0.5f) * ext.x / resolution,
                bounds.lo.y + (iy + 0.5f) * ext.y / resolution,
                bounds.lo.z + (iz + 0.5f) * ext.z / resolution};
    }

    // Containing voxel if occupied, else the Euclidean-nearest occupied voxel
    // within a Chebyshev radius of 3; beyond that, a miss.
    std::optional<Vec3> query(const Vec3& position) const {
        Vec3 p = min(max(position, bounds.lo), bounds.hi);
        uint64_t idx = voxel_index(p);
        auto it = voxels.find(idx);
        if (it != voxels.end()) return it->second;

        uint64_t n = static_cast<uint64_t>(resolution);
        int ix = static_cast<int>(idx % n);
        int iy = static_cast<int>((idx / n) % n);
        int iz = static_cast<int>(idx / (n * n));
        float best_d2 = kInf;
        uint64_t best_idx = 0;
        bool found = false;
        constexpr int kRadius = 3;
        for (int dz = -kRadius; dz <= kRadius; ++dz) {
            int z = iz + dz;
            if (z < 0 || z >= resolution) continue;
            for (int dy = -kRadius; dy <= kRadius; ++dy) {
                int y = iy + dy;
                if (y < 0 || y >= resolution) continue;
                for (int dx = -kRadius; dx <= kRadius; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    int x = ix + dx;
                    if (x < 0 || x >= resolution) continue;
                    uint64_t cand = static_cast<uint64_t>(x) + n * (static_cast<uint64_t>(y) + n * z);
                    auto cit = voxels.find(cand);
                    if (cit == voxels.end()) continue;
                    float d2 = length_squared(voxel_center(cand) - p);
                    if (d2 < best_d2 || (d2 == best_d2 && cand < best_idx)) {
                        best_d2 = d2;
                        best_idx = cand;
                        found = true;
                    }
                }
            }
        }
        if (found) return voxels.at(best_idx);
        return std::nullopt;
    }

    size_t occupied_count() const { return voxels.size(); }
};

// Average-pool every input pixel onto the voxel grid through its primary hit.
// Per-view partial sums in double precision are merged in view order, so the
// result does not depend on the thread count.
inline RadianceCache build_cache(const Scene& scene, const Bvh& bvh, int resolution = 256,
                                 int threads = 1) {
    RadianceCache cache;
    cache.resolution = resolution;
    cache.bounds = scene.aabb;

    struct Accum {
        double rgb[3] = {0, 0, 0};
        uint64_t count = 0;
    };
    std::vector<std::unordered_map<uint64_t, Accum>> per_view(scene.view_count());
    parallel_items(static_cast<int64_t>(scene.view_count()), threads, [&](int64_t v) {
        const Camera& cam = scene.cameras[v];
        const HdrImage& frame = scene.frames[v];
        auto& local = per_view[v];
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                auto hit = intersect(bvh, scene.mesh, cam.primary_ray(x, y));
                if (!hit) continue;
                Accum& a = local[cache.voxel_index(hit->position)];
                Vec3 c = frame.at(x, y);
                a.rgb[0] += c.x;
                a.rgb[1] += c.y;
                a.rgb[2] += c.z;
                a.count += 1;
            }
        }
    });

    std::unordered_map<uint64_t, Accum> merged;
    for (auto& local : per_view) {
        for (const auto& [idx, a] : local) {
            Accum& g = merged[idx];
            g.rgb[0] += a.rgb[0];
            g.rgb[1] += a.rgb[1];
            g.rgb[2] += a.rgb[2];
            g.count += a.count;
        }
        local.clear();
    }
    if (merged.empty()) throw std::runtime_error("build_cache: no occupied voxels");

    cache.voxels.reserve(merged.size());
    for (const auto& [idx, a] : merged) {
        double inv = 1.0 / static_cast<double>(a.count);
        cache.voxels.emplace(idx, Vec3{static_cast<float>(a.rgb[0] * inv),
                                       static_cast<float>(a.rgb[1] * inv),
                                       static_cast<float>(a.rgb[2] * inv)});
    }
    return cache;
}

// Binary dump: i32 resolution, f32 aabb lo/hi, then (u64 index, f32 rgb[3])
// records sorted by index, little endian throughout.
inline void save_cache(const RadianceCache& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_cache: cannot open " + path);
    int32_t n = cache.resolution;
    out.write(reinterpret_cast<const char*>(&n), 4);
    float box[6] = {cache.bounds.lo.x, cache.bounds.lo.y, cache.bounds.lo.z,
                    cache.bounds.hi.x, cache.bounds.hi.y, cache.bounds.hi.z};
    out.write(reinterpret_cast<const char*>(box), sizeof(box));
    std::vector<uint64_t> keys;
    keys.reserve(cache.voxels.size());
    for (const auto& [k, v] : cache.voxels) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (uint64_t k : keys) {
        const Vec3& v = cache.voxels.at(k);
        out.write(reinterpret_cast<const char*>(&k), 8);
        float rgb[3] = {v.x, v.y, v.z};
        out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
    if (!out) throw std::runtime_error("save_cache: write failed for " + path);
}

inline RadianceCache load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_cache: cannot open " + path);
    RadianceCache cache;
    int32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    float box[6];
    in.read(reinterpret_cast<char*>(box), sizeof(box));
    if (!in || n <= 0) throw std::runtime_error("load_cache: bad header in " + path);
    cache.resolution = n;
    cache.bounds.lo = {box[0], box[1], box[2]};
    cache.bounds.hi = {box[3], box[4], box[5]};
    for (;;) {
        uint64_t k;
        float rgb[3];
        in.read(reinterpret_cast<char*>(&k), 8);
        if (in.eof()) break;
        in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
        if (!in) throw std::runtime_error("load_cache: truncated record in " + path);
        cache.voxels.emplace(k, Vec3{rgb[0], rgb[1], rgb[2]});
    }
    return cache;
}

}  // namespace fipt
