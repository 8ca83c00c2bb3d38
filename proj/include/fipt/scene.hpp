// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fipt/camera.hpp"
#include "fipt/geometry.hpp"
#include "fipt/image.hpp"
#include "fipt/mesh.hpp"

namespace fipt {

struct Scene {
    TriangleMesh mesh;
    std::vector<Camera> cameras;
    std::vector<HdrImage> frames;  // linear HDR radiance, one per camera
    std::vector<uint16_t> part_labels;      // per-triangle, fused
    std::vector<uint16_t> semantic_labels;  // per-triangle, fused
    Aabb aabb;

    size_t view_count() const { return cameras.size(); }
};

// Modal per-triangle label from per-view label maps: every pixel's primary
// hit votes its label onto the hit triangle; ties break toward the smaller
// label; unobserved triangles get 0.
inline std::vector<uint16_t> fuse_segmentation(const std::vector<LabelImage>& per_view_labels,
                                               const Scene& scene, const Bvh& bvh) {
    for (size_t v = 0; v < per_view_labels.size(); ++v) {
        if (per_view_labels[v].width != scene.cameras[v].width ||
            per_view_labels[v].height != scene.cameras[v].height)
            throw std::runtime_error("fuse_segmentation: label map " + std::to_string(v) +
                                     " resolution mismatch");
    }
    std::vector<std::pair<uint32_t, uint16_t>> votes;
    for (size_t v = 0; v < per_view_labels.size(); ++v) {
        const Camera& cam = scene.cameras[v];
        const LabelImage& labels = per_view_labels[v];
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                Ray ray = cam.primary_ray(x, y);
                if (auto hit = intersect(bvh, scene.mesh, ray))
                    votes.emplace_back(hit->triangle, labels.at(x, y));
            }
        }
    }
    std::sort(votes.begin(), votes.end());
    std::vector<uint16_t> fused(scene.mesh.triangle_count(), 0);
    size_t i = 0;
    while (i < votes.size()) {
        uint32_t tri = votes[i].first;
        uint16_t best_label = 0;
        size_t best_count = 0;
        while (i < votes.size() && votes[i].first == tri) {
            uint16_t label = votes[i].second;
            size_t count = 0;
            while (i < votes.size() && votes[i].first == tri && votes[i].second == label) {
                ++count;
                ++i;
            }
            if (count > best_count) {  // sorted ascending, so ties keep the smaller label
                best_count = count;
                best_label = label;
            }
        }
        fused[tri] = best_label;
    }
    return fused;
}

namespace detail {

inline Camera camera_from_json(const nlohmann::json& j, const std::string& label) {
    Camera cam;
    cam.fx = j.at("fx").get<float>();
    cam.fy = j.at("fy").get<float>();
    cam.cx = j.at("cx").get<float>();
    cam.cy = j.at("cy").get<float>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto& m = j.at("to_world");
    if (!m.is_array() || m.size() != 16)
        throw std::runtime_error(label + ": to_world must be 16 floats");
    for (int r = 0; r < 3; ++r) {
        cam.to_world.rotation.rows[r] = {m[r * 4 + 0].get<float>(), m[r * 4 + 1].get<float>(),
                                         m[r * 4 + 2].get<float>()};
        cam.to_world.translation[r] = m[r * 4 + 3].get<float>();
    }
    float w0 = m[12].get<float>(), w1 = m[13].get<float>(), w2 = m[14].get<float>(),
          w3 = m[15].get<float>();
    if (w0 != 0.f || w1 != 0.f || w2 != 0.f || w3 != 1.f)
        throw std::runtime_error(label + ": to_world last row must be 0 0 0 1");
    validate_camera(cam, label);
    return cam;
}

inline nlohmann::json camera_to_json(const Camera& cam) {
    nlohmann::json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> m(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        m[r * 4 + 0] = cam.to_world.rotation.rows[r].x;
        m[r * 4 + 1] = cam.to_world.rotation.rows[r].y;
        m[r * 4 + 2] = cam.to_world.rotation.rows[r].z;
        m[r * 4 + 3] = cam.to_world.translation[r];
    }
    m[15] = 1.0;
    j["to_world"] = m;
    return j;
}

}  // namespace detail

inline void validate_scene(const Scene& scene) {
    validate_mesh(scene.mesh);
    if (scene.cameras.size() != scene.frames.size())
        throw std::runtime_error("scene: camera count != frame count");
    for (size_t i = 0; i < scene.cameras.size(); ++i) {
        validate_camera(scene.cameras[i], "camera " + std::to_string(i));
        const HdrImage& f = scene.frames[i];
        if (f.width != scene.cameras[i].width || f.height != scene.cameras[i].height)
            throw std::runtime_error("frame " + std::to_string(i) + ": resolution mismatch");
        for (size_t k = 0; k < f.data.size(); ++k) {
            if (!std::isfinite(f.data[k]))
                throw std::runtime_error("frame " + std::to_string(i) + ": non-finite radiance");
            if (f.data[k] < 0.f)
                throw std::runtime_error("frame " + std::to_string(i) + ": negative radiance");
        }
    }
    for (size_t i = 0; i < scene.mesh.positions.size(); ++i)
        if (!scene.aabb.contains_strict(scene.mesh.positions[i]))
            throw std::runtime_error("scene: aabb does not strictly contain vertex " +
                                     std::to_string(i));
    if (scene.part_labels.size() != scene.mesh.triangle_count() ||
        scene.semantic_labels.size() != scene.mesh.triangle_count())
        throw std::runtime_error("scene: label array size mismatch");
}

// Scene descriptor: JSON referencing an OBJ mesh, PFM frames, and optional
// per-view 16-bit PGM label maps (fused onto triangles at load time).
inline Scene load_scene(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_scene: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_scene: malformed descriptor " + path + ": " + e.what());
    }
    fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    Scene scene;
    scene.mesh = load_obj(resolve(j.at("mesh").get<std::string>()));
    scene.mesh.compute_areas();

    for (size_t i = 0; i < j.at("cameras").size(); ++i)
        scene.cameras.push_back(
            detail::camera_from_json(j["cameras"][i], "camera " + std::to_string(i)));
    for (const auto& fp : j.at("frames"))
        scene.frames.push_back(read_pfm(resolve(fp.get<std::string>())));

    if (j.contains("aabb")) {
        const auto& b = j["aabb"];
        scene.aabb.lo = {b[0][0].get<float>(), b[0][1].get<float>(), b[0][2].get<float>()};
        scene.aabb.hi = {b[1][0].get<float>(), b[1][1].get<float>(), b[1][2].get<float>()};
    } else {
        Aabb mb = scene.mesh.bounds();
        float pad = std::max(1e-3f * mb.diagonal(), 1e-4f);
        scene.aabb.lo = mb.lo - Vec3(pad);
        scene.aabb.hi = mb.hi + Vec3(pad);
    }

    scene.part_labels.assign(scene.mesh.triangle_count(), 0);
    scene.semantic_labels.assign(scene.mesh.triangle_count(), 0);
    auto load_labels = [&](const char* key) {
        std::vector<LabelImage> maps;
        for (const auto& lp : j[key]) maps.push_back(read_pgm16(resolve(lp.get<std::string>())));
        if (maps.size() != scene.cameras.size())
            throw std::runtime_error(std::string("load_scene: ") + key + " count mismatch");
        return maps;
    };
    if (j.contains("part_labels") || j.contains("semantic_labels")) {
        Bvh bvh = build_bvh(scene.mesh);
        if (j.contains("part_labels"))
            scene.part_labels = fuse_segmentation(load_labels("part_labels"), scene, bvh);
        if (j.contains("semantic_labels"))
            scene.semantic_labels = fuse_segmentation(load_labels("semantic_labels"), scene, bvh);
    }

    validate_scene(scene);
    return scene;
}

// Writes dir/scene.json + mesh.obj + frame PFMs. Per-triangle labels are
// rasterized back to per-view maps so the descriptor stays self-contained.
inline void save_scene(const Scene& scene, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::path base(dir);
    save_obj(scene.mesh, (base / "mesh.obj").string());

    nlohmann::json j;
    j["mesh"] = "mesh.obj";
    j["aabb"] = {{scene.aabb.lo.x, scene.aabb.lo.y, scene.aabb.lo.z},
                 {scene.aabb.hi.x, scene.aabb.hi.y, scene.aabb.hi.z}};
    j["cameras"] = nlohmann::json::array();
    j["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < scene.cameras.size(); ++i) {
        j["cameras"].push_back(detail::camera_to_json(scene.cameras[i]));
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%04zu.pfm", i);
        write_pfm(scene.frames[i], (base / name).string());
        j["frames"].push_back(name);
    }

    auto any_nonzero = [](const std::vector<uint16_t>& v) {
        return std::any_of(v.begin(), v.end(), [](uint16_t x) { return x != 0; });
    };
    if (any_nonzero(scene.part_labels) || any_nonzero(scene.semantic_labels)) {
        Bvh bvh = build_bvh(scene.mesh);
        auto rasterize = [&](const std::vector<uint16_t>& tri_labels, const char* prefix,
                             nlohmann::json& list) {
            for (size_t v = 0; v < scene.cameras.size(); ++v) {
                const Camera& cam = scene.cameras[v];
                LabelImage map(cam.width, cam.height, 0);
                for (int y = 0; y < cam.height; ++y)
                    for (int x = 0; x < cam.width; ++x)
                        if (auto hit = intersect(bvh, scene.mesh, cam.primary_ray(x, y)))
                            map.set(x, y, tri_labels[hit->triangle]);
                char name[64];
                std::snprintf(name, sizeof(name), "%s_%04zu.pgm", prefix, v);
                write_pgm16(map, (base / name).string());
                list.push_back(name);
            }
        };
        if (any_nonzero(scene.part_labels)) {
            j["part_labels"] = nlohmann::json::array();
            rasterize(scene.part_labels, "part", j["part_labels"]);
        }
        if (any_nonzero(scene.semantic_labels)) {
            j["semantic_labels"] = nlohmann::json::array();
            rasterize(scene.semantic_labels, "semantic", j["semantic_labels"]);
        }
    }
    std::ofstream out((base / "scene.json").string());
    out << j.dump(1) << "\n";
    if (!out) throw std::runtime_error("save_scene: write failed");
}

}  // namespace fipt
