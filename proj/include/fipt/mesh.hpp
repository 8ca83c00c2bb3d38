// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipt/math.hpp"

namespace fipt {

struct TriangleMesh {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;  // per-vertex, unit length
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<float> areas;  // per-triangle, m^2

    size_t triangle_count() const { return triangles.size(); }

    Vec3 vertex(uint32_t tri, int corner) const { return positions[triangles[tri][corner]]; }

    Vec3 geometric_normal(uint32_t tri) const {
        const auto& t = triangles[tri];
        return normalize(cross(positions[t[1]] - positions[t[0]], positions[t[2]] - positions[t[0]]));
    }

    Vec3 shading_normal(uint32_t tri, float u, float v) const {
        const auto& t = triangles[tri];
        Vec3 n = normals[t[0]] * (1.f - u - v) + normals[t[1]] * u + normals[t[2]] * v;
        return normalize(n);
    }

    Vec3 point_at(uint32_t tri, float u, float v) const {
        const auto& t = triangles[tri];
        return positions[t[0]] * (1.f - u - v) + positions[t[1]] * u + positions[t[2]] * v;
    }

    void compute_areas() {
        areas.resize(triangles.size());
        for (size_t i = 0; i < triangles.size(); ++i) {
            const auto& t = triangles[i];
            areas[i] = 0.5f * length(cross(positions[t[1]] - positions[t[0]],
                                           positions[t[2]] - positions[t[0]]));
        }
    }

    Aabb bounds() const {
        Aabb box;
        for (const Vec3& p : positions) box.expand(p);
        return box;
    }

    float total_area() const {
        double s = 0.0;
        for (float a : areas) s += a;
        return static_cast<float>(s);
    }
};

// Throws with the offending element on the first invariant violation.
inline void validate_mesh(const TriangleMesh& mesh) {
    if (mesh.triangles.empty()) throw std::runtime_error("mesh: no triangles");
    if (mesh.normals.size() != mesh.positions.size())
        throw std::runtime_error("mesh: normal count != vertex count");
    for (size_t i = 0; i < mesh.normals.size(); ++i) {
        float len = length(mesh.normals[i]);
        if (std::fabs(len - 1.f) > 1e-6f)
            throw std::runtime_error("mesh: normal " + std::to_string(i) + " not unit length");
        if (!is_finite(mesh.positions[i]))
            throw std::runtime_error("mesh: vertex " + std::to_string(i) + " not finite");
    }
    for (size_t i = 0; i < mesh.triangles.size(); ++i) {
        for (uint32_t v : mesh.triangles[i])
            if (v >= mesh.positions.size())
                throw std::runtime_error("mesh: triangle " + std::to_string(i) +
                                         " references missing vertex");
        if (i < mesh.areas.size() && mesh.areas[i] <= 1e-12f)
            throw std::runtime_error("mesh: triangle " + std::to_string(i) + " degenerate");
    }
}

// OBJ subset: v, vn, and triangular f with v//vn (or matching v) indices.
inline TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    TriangleMesh mesh;
    std::vector<Vec3> raw_normals;
    std::vector<Vec3> raw_positions;
    std::string line;
    struct Corner { int64_t v, n; };
    std::vector<std::array<Corner, 3>> faces;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            ls >> p.x >> p.y >> p.z;
            raw_positions.push_back(p);
        } else if (tag == "vn") {
            Vec3 n;
            ls >> n.x >> n.y >> n.z;
            raw_normals.push_back(n);
        } else if (tag == "f") {
            std::array<Corner, 3> face{};
            for (int c = 0; c < 3; ++c) {
                std::string tok;
                if (!(ls >> tok)) throw std::runtime_error("load_obj: non-triangular face in " + path);
                int64_t vi = 0, ni = 0;
                size_t slash = tok.find('/');
                if (slash == std::string::npos) {
                    vi = std::stoll(tok);
                    ni = vi;
                } else {
                    vi = std::stoll(tok.substr(0, slash));
                    size_t slash2 = tok.find('/', slash + 1);
                    std::string nstr = slash2 == std::string::npos ? "" : tok.substr(slash2 + 1);
                    ni = nstr.empty() ? vi : std::stoll(nstr);
                }
                face[c] = {vi, ni};
            }
            std::string extra;
            if (ls >> extra) throw std::runtime_error("load_obj: non-triangular face in " + path);
            faces.push_back(face);
        }
    }
    if (raw_normals.empty()) throw std::runtime_error("load_obj: missing normals in " + path);

    // Deduplicate (position, normal) pairs into vertices.
    std::vector<int64_t> pair_to_vertex;
    auto resolve = [&](int64_t vi, int64_t ni) -> uint32_t {
        if (vi < 0) vi = static_cast<int64_t>(raw_positions.size()) + vi + 1;
        if (ni < 0) ni = static_cast<int64_t>(raw_normals.size()) + ni + 1;
        if (vi < 1 || vi > static_cast<int64_t>(raw_positions.size()) || ni < 1 ||
            ni > static_cast<int64_t>(raw_normals.size()))
            throw std::runtime_error("load_obj: face index out of range in " + path);
        size_t key = static_cast<size_t>(vi - 1) * raw_normals.size() + static_cast<size_t>(ni - 1);
        if (pair_to_vertex.size() <= key) pair_to_vertex.resize(key + 1, -1);
        if (pair_to_vertex[key] < 0) {
            pair_to_vertex[key] = static_cast<int64_t>(mesh.positions.size());
            mesh.positions.push_back(raw_positions[vi - 1]);
            mesh.normals.push_back(raw_normals[ni - 1]);
        }
        return static_cast<uint32_t>(pair_to_vertex[key]);
    };
    for (const auto& f : faces)
        mesh.triangles.push_back({resolve(f[0].v, f[0].n), resolve(f[1].v, f[1].n),
                                  resolve(f[2].v, f[2].n)});
    mesh.compute_areas();
    return mesh;
}

inline void save_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    out.precision(9);
    for (const Vec3& p : mesh.positions) out << "v " << p.x << " " << p.y << " " << p.z << "\n";
    for (const Vec3& n : mesh.normals) out << "vn " << n.x << " " << n.y << " " << n.z << "\n";
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << "//" << t[0] + 1 << " " << t[1] + 1 << "//" << t[1] + 1 << " "
            << t[2] + 1 << "//" << t[2] + 1 << "\n";
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

}  // namespace fipt
