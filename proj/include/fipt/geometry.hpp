// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fipt/camera.hpp"
#include "fipt/math.hpp"
#include "fipt/mesh.hpp"

namespace fipt {

struct Hit {
    uint32_t triangle = 0;
    float t = 0.f;
    Vec3 position;
    Vec3 shading_normal;    // interpolated vertex normals, unit
    Vec3 geometric_normal;  // face normal, unit
    float u = 0.f, v = 0.f;  // barycentrics of corners 1 and 2
};

namespace detail {

// Moller-Trumbore in double precision. The small barycentric slack keeps
// shared edges watertight: a ray crossing a quad diagonal must hit at least
// one of the two triangles.
inline bool intersect_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2, const Ray& ray,
                               float& t_out, float& u_out, float& v_out) {
    const double eps_bary = 1e-9;
    double e1x = static_cast<double>(v1.x) - v0.x, e1y = static_cast<double>(v1.y) - v0.y,
           e1z = static_cast<double>(v1.z) - v0.z;
    double e2x = static_cast<double>(v2.x) - v0.x, e2y = static_cast<double>(v2.y) - v0.y,
           e2z = static_cast<double>(v2.z) - v0.z;
    double dx = ray.direction.x, dy = ray.direction.y, dz = ray.direction.z;
    double px = dy * e2z - dz * e2y;
    double py = dz * e2x - dx * e2z;
    double pz = dx * e2y - dy * e2x;
    double det = e1x * px + e1y * py + e1z * pz;
    if (std::fabs(det) < 1e-14) return false;  // parallel
    double inv_det = 1.0 / det;
    double tx = static_cast<double>(ray.origin.x) - v0.x;
    double ty = static_cast<double>(ray.origin.y) - v0.y;
    double tz = static_cast<double>(ray.origin.z) - v0.z;
    double u = (tx * px + ty * py + tz * pz) * inv_det;
    if (u < -eps_bary || u > 1.0 + eps_bary) return false;
    double qx = ty * e1z - tz * e1y;
    double qy = tz * e1x - tx * e1z;
    double qz = tx * e1y - ty * e1x;
    double v = (dx * qx + dy * qy + dz * qz) * inv_det;
    if (v < -eps_bary || u + v > 1.0 + eps_bary) return false;
    double t = (e2x * qx + e2y * qy + e2z * qz) * inv_det;
    if (t <= ray.t_min || t >= ray.t_max) return false;
    t_out = static_cast<float>(t);
    u_out = static_cast<float>(clamp(u, 0.0, 1.0));
    v_out = static_cast<float>(clamp(v, 0.0, 1.0));
    return true;
}

inline bool intersect_aabb(const Aabb& box, const Ray& ray, const Vec3& inv_dir, float t_best) {
    float t0 = ray.t_min, t1 = std::min(ray.t_max, t_best);
    for (int a = 0; a < 3; ++a) {
        float near = (box.lo[a] - ray.origin[a]) * inv_dir[a];
        float far = (box.hi[a] - ray.origin[a]) * inv_dir[a];
        if (near > far) std::swap(near, far);
        t0 = std::max(t0, near);
        t1 = std::min(t1, far);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace detail

class Bvh {
public:
    struct Node {
        Aabb box;
        uint32_t left_or_first = 0;  // interior: left child; leaf: first triangle
        uint16_t count = 0;          // 0 for interior nodes
        uint16_t axis = 0;
        uint32_t right = 0;  // interior only

        bool is_leaf() const { return count > 0; }
    };

    std::vector<Node> nodes;
    std::vector<uint32_t> order;  // triangle permutation, leaves index into this

    static constexpr int kMaxDepth = 64;
    static constexpr int kLeafSize = 4;

    uint32_t node_count() const { return static_cast<uint32_t>(nodes.size()); }
};

inline Bvh build_bvh(const TriangleMesh& mesh) {
    size_t n = mesh.triangle_count();
    if (n == 0) throw std::runtime_error("build_bvh: empty mesh");

    std::vector<Aabb> tri_box(n);
    std::vector<Vec3> tri_centroid(n);
    for (size_t i = 0; i < n; ++i) {
        Aabb b;
        b.expand(mesh.vertex(static_cast<uint32_t>(i), 0));
        b.expand(mesh.vertex(static_cast<uint32_t>(i), 1));
        b.expand(mesh.vertex(static_cast<uint32_t>(i), 2));
        tri_box[i] = b;
        tri_centroid[i] = b.center();
    }

    Bvh bvh;
    bvh.order.resize(n);
    for (size_t i = 0; i < n; ++i) bvh.order[i] = static_cast<uint32_t>(i);
    bvh.nodes.reserve(2 * n);

    struct BuildItem {
        uint32_t node;
        uint32_t first, count;
        int depth;
    };
    bvh.nodes.push_back({});
    std::vector<BuildItem> stack{{0, 0, static_cast<uint32_t>(n), 0}};

    constexpr int kBins = 16;
    while (!stack.empty()) {
        BuildItem item = stack.back();
        stack.pop_back();
        Bvh::Node& node = bvh.nodes[item.node];
        Aabb box, centroid_box;
        for (uint32_t i = item.first; i < item.first + item.count; ++i) {
            box.expand(tri_box[bvh.order[i]]);
            centroid_box.expand(tri_centroid[bvh.order[i]]);
        }
        node.box = box;

        bool make_leaf = item.count <= Bvh::kLeafSize || item.depth >= Bvh::kMaxDepth;
        uint32_t mid = item.first + item.count / 2;
        int axis = 0;
        if (!make_leaf) {
            Vec3 ext = centroid_box.extent();
            if (ext.y > ext.x) axis = 1;
            if (ext.z > ext[axis]) axis = 2;
            float lo = centroid_box.lo[axis], span = ext[axis];
            if (span <= 0.f) {
                make_leaf = item.count <= 64;  // all centroids coincide
                if (!make_leaf) mid = item.first + item.count / 2;
            } else {
                // binned SAH
                struct Bin { Aabb box; uint32_t count = 0; };
                Bin bins[kBins];
                auto bin_of = [&](uint32_t tri) {
                    int b = static_cast<int>((tri_centroid[tri][axis] - lo) / span * kBins);
                    return clamp(b, 0, kBins - 1);
                };
                for (uint32_t i = item.first; i < item.first + item.count; ++i) {
                    int b = bin_of(bvh.order[i]);
                    bins[b].box.expand(tri_box[bvh.order[i]]);
                    bins[b].count++;
                }
                float best_cost = kInf;
                int best_split = -1;
                for (int s = 1; s < kBins; ++s) {
                    Aabb lbox, rbox;
                    uint32_t lc = 0, rc = 0;
                    for (int b = 0; b < s; ++b) {
                        if (bins[b].count) lbox.expand(bins[b].box);
                        lc += bins[b].count;
                    }
                    for (int b = s; b < kBins; ++b) {
                        if (bins[b].count) rbox.expand(bins[b].box);
                        rc += bins[b].count;
                    }
                    if (lc == 0 || rc == 0) continue;
                    float cost = lbox.surface_area() * lc + rbox.surface_area() * rc;
                    if (cost < best_cost) {
                        best_cost = cost;
                        best_split = s;
                    }
                }
                auto* order = bvh.order.data();
                if (best_split < 0) {
                    // median-split fallback
                    mid = item.first + item.count / 2;
                    std::nth_element(order + item.first, order + mid,
                                     order + item.first + item.count,
                                     [&](uint32_t a, uint32_t b) {
                                         return tri_centroid[a][axis] < tri_centroid[b][axis];
                                     });
                } else {
                    auto* split_it = std::partition(order + item.first,
                                                    order + item.first + item.count,
                                                    [&](uint32_t tri) {
                                                        int b = static_cast<int>(
                                                            (tri_centroid[tri][axis] - lo) / span * kBins);
                                                        return clamp(b, 0, kBins - 1) < best_split;
                                                    });
                    mid = static_cast<uint32_t>(split_it - order);
                    if (mid == item.first || mid == item.first + item.count)
                        mid = item.first + item.count / 2;
                }
            }
        }

        if (make_leaf) {
            node.left_or_first = item.first;
            node.count = static_cast<uint16_t>(std::min<uint32_t>(item.count, 0xffffu));
            continue;
        }
        uint32_t left = static_cast<uint32_t>(bvh.nodes.size());
        bvh.nodes.push_back({});
        uint32_t right = static_cast<uint32_t>(bvh.nodes.size());
        bvh.nodes.push_back({});
        // node reference may be stale after push_back
        bvh.nodes[item.node].left_or_first = left;
        bvh.nodes[item.node].right = right;
        bvh.nodes[item.node].count = 0;
        bvh.nodes[item.node].axis = static_cast<uint16_t>(axis);
        stack.push_back({right, mid, item.first + item.count - mid, item.depth + 1});
        stack.push_back({left, item.first, mid - item.first, item.depth + 1});
    }
    return bvh;
}

// Nearest intersection in (t_min, t_max), or nullopt. Triangles are
// two-sided; callers flip normals against the viewing direction.
inline std::optional<Hit> intersect(const Bvh& bvh, const TriangleMesh& mesh, const Ray& ray) {
    Vec3 inv_dir{1.f / ray.direction.x, 1.f / ray.direction.y, 1.f / ray.direction.z};
    float best_t = ray.t_max;
    int best_tri = -1;
    float best_u = 0.f, best_v = 0.f;

    uint32_t stack[Bvh::kMaxDepth + 2];
    int sp = 0;
    stack[sp++] = 0;
    Ray r = ray;
    while (sp > 0) {
        const Bvh::Node& node = bvh.nodes[stack[--sp]];
        r.t_max = best_t;
        if (!detail::intersect_aabb(node.box, r, inv_dir, best_t)) continue;
        if (node.is_leaf()) {
            for (uint32_t i = node.left_or_first; i < node.left_or_first + node.count; ++i) {
                uint32_t tri = bvh.order[i];
                float t, u, v;
                Ray tr = ray;
                tr.t_max = best_t;
                if (detail::intersect_triangle(mesh.vertex(tri, 0), mesh.vertex(tri, 1),
                                               mesh.vertex(tri, 2), tr, t, u, v)) {
                    best_t = t;
                    best_tri = static_cast<int>(tri);
                    best_u = u;
                    best_v = v;
                }
            }
        } else {
            // near child first
            bool dir_neg = ray.direction[node.axis] < 0.f;
            uint32_t first = dir_neg ? node.right : node.left_or_first;
            uint32_t second = dir_neg ? node.left_or_first : node.right;
            stack[sp++] = second;
            stack[sp++] = first;
        }
    }
    if (best_tri < 0) return std::nullopt;

    Hit hit;
    hit.triangle = static_cast<uint32_t>(best_tri);
    hit.t = best_t;
    hit.u = best_u;
    hit.v = best_v;
    hit.position = ray.at(best_t);
    hit.shading_normal = mesh.shading_normal(hit.triangle, best_u, best_v);
    hit.geometric_normal = mesh.geometric_normal(hit.triangle);
    return hit;
}

// Any-hit query for shadow rays.
inline bool intersect_any(const Bvh& bvh, const TriangleMesh& mesh, const Ray& ray) {
    Vec3 inv_dir{1.f / ray.direction.x, 1.f / ray.direction.y, 1.f / ray.direction.z};
    uint32_t stack[Bvh::kMaxDepth + 2];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Bvh::Node& node = bvh.nodes[stack[--sp]];
        if (!detail::intersect_aabb(node.box, ray, inv_dir, ray.t_max)) continue;
        if (node.is_leaf()) {
            for (uint32_t i = node.left_or_first; i < node.left_or_first + node.count; ++i) {
                uint32_t tri = bvh.order[i];
                float t, u, v;
                if (detail::intersect_triangle(mesh.vertex(tri, 0), mesh.vertex(tri, 1),
                                               mesh.vertex(tri, 2), ray, t, u, v))
                    return true;
            }
        } else {
            stack[sp++] = node.right;
            stack[sp++] = node.left_or_first;
        }
    }
    return false;
}

// Offset a secondary ray origin along the geometric normal to avoid
// self-intersection. epsilon = 1e-4 * scene diagonal, sign chosen so the
// push is toward the side the new ray leaves on.
inline Vec3 offset_origin(const Vec3& pos, const Vec3& geom_normal, const Vec3& new_dir,
                          float scene_epsilon) {
    float side = dot(new_dir, geom_normal) >= 0.f ? 1.f : -1.f;
    return pos + geom_normal * (side * scene_epsilon);
}

inline float scene_epsilon_for(const Aabb& bounds) { return 1e-4f * bounds.diagonal(); }

// Uniform area sampling via the sqrt-barycentric warp; u = (0,0) maps to the
// first vertex.
inline Vec3 sample_triangle_point(const Vec3& v0, const Vec3& v1, const Vec3& v2, Vec2 u) {
    float su = std::sqrt(u.x);
    float b1 = su * (1.f - u.y);
    float b2 = su * u.y;
    float b0 = 1.f - su;
    return v0 * b0 + v1 * b1 + v2 * b2;
}

inline Vec3 sample_triangle(const TriangleMesh& mesh, uint32_t tri, Vec2 u) {
    return sample_triangle_point(mesh.vertex(tri, 0), mesh.vertex(tri, 1), mesh.vertex(tri, 2), u);
}

}  // namespace fipt
