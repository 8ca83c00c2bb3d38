// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "fipt/math.hpp"

namespace fipt {

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
    float t_min = 0.f;
    float t_max = kInf;

    Vec3 at(float t) const { return origin + direction * t; }
};

// Pinhole camera. Camera frame is x right, y up, z forward (a proper
// rotation against a y-up world); image rows grow downward, so the row
// coordinate maps to -y in camera space.
struct Camera {
    float fx = 0.f, fy = 0.f, cx = 0.f, cy = 0.f;
    int width = 0, height = 0;
    Transform to_world;

    Vec3 position() const { return to_world.translation; }

    Ray primary_ray(int px, int py, Vec2 jitter = {0.5f, 0.5f}) const {
        if (px < 0 || px >= width || py < 0 || py >= height)
            throw std::out_of_range("primary_ray: pixel out of bounds");
        float sx = (static_cast<float>(px) + jitter.x - cx) / fx;
        float sy = (static_cast<float>(py) + jitter.y - cy) / fy;
        Vec3 dir_cam = normalize(Vec3{sx, -sy, 1.f});
        Ray ray;
        ray.origin = to_world.translation;
        ray.direction = to_world.apply_vector(dir_cam);
        ray.t_min = 0.f;
        ray.t_max = kInf;
        return ray;
    }

    // World point -> (pixel x, pixel y, camera depth). Depth <= 0 means the
    // point is behind the camera.
    Vec3 project(const Vec3& world) const {
        Vec3 p = to_world.inverse().apply_point(world);
        if (p.z <= 0.f) return {0.f, 0.f, p.z};
        return {p.x / p.z * fx + cx, -p.y / p.z * fy + cy, p.z};
    }
};

// z = view direction, y ~ world up, proper rotation (det +1). `forward` must
// not be parallel to `up`.
inline Transform look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0.f, 1.f, 0.f}) {
    Vec3 z = normalize(target - eye);
    Vec3 x = normalize(cross(up, z));
    Vec3 y = cross(z, x);
    Transform t;
    // rows of the world-from-camera rotation are the camera axes transposed
    t.rotation.rows[0] = {x.x, y.x, z.x};
    t.rotation.rows[1] = {x.y, y.y, z.y};
    t.rotation.rows[2] = {x.z, y.z, z.z};
    t.translation = eye;
    return t;
}

inline void validate_camera(const Camera& cam, const std::string& label) {
    if (cam.width <= 0 || cam.height <= 0)
        throw std::runtime_error(label + ": bad resolution");
    if (cam.fx <= 0.f || cam.fy <= 0.f)
        throw std::runtime_error(label + ": bad focal length");
    if (cam.to_world.orthonormality_error() > 1e-6f)
        throw std::runtime_error(label + ": rotation not orthonormal");
}

}  // namespace fipt
