// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "fipt/radiance_cache.hpp"
#include "test_util.hpp"

using namespace fipt;
using namespace fipt_test;

namespace {

// Single camera at the box center looking at the back wall.
Scene flat_wall_scene(const Vec3& frame_color) {
    Scene scene;
    scene.mesh = make_box({0, 0, 0}, {2, 2, 2}, true);
    scene.aabb = {{-0.01f, -0.01f, -0.01f}, {2.01f, 2.01f, 2.01f}};
    Camera cam;
    cam.width = 32;
    cam.height = 32;
    cam.fx = cam.fy = 40.f;
    cam.cx = 16.f;
    cam.cy = 16.f;
    cam.to_world = look_at({1.f, 1.f, 1.5f}, {1.f, 1.f, 0.f});
    scene.cameras.push_back(cam);
    scene.frames.emplace_back(32, 32, frame_color);
    scene.part_labels.assign(scene.mesh.triangle_count(), 0);
    scene.semantic_labels.assign(scene.mesh.triangle_count(), 0);
    return scene;
}

}  // namespace

TEST_CASE("constant frame fills occupied voxels with that value") {
    Scene scene = flat_wall_scene({1.f, 1.f, 1.f});
    Bvh bvh = build_bvh(scene.mesh);
    RadianceCache cache = build_cache(scene, bvh, 64);
    REQUIRE(cache.occupied_count() > 0);
    for (const auto& [idx, v] : cache.voxels) {
        CHECK(v.x == Catch::Approx(1.f));
        CHECK(v.y == Catch::Approx(1.f));
        CHECK(v.z == Catch::Approx(1.f));
    }
}

TEST_CASE("two pixels pooled into one voxel store the mean") {
    RadianceCache cache;
    cache.resolution = 4;
    cache.bounds = {{0, 0, 0}, {4, 4, 4}};
    // emulate the builder's pooling arithmetic directly
    double sum = 0.2 + 0.4;
    cache.voxels[cache.voxel_index({0.5f, 0.5f, 0.5f})] =
        Vec3(static_cast<float>(sum / 2.0));
    auto v = cache.query({0.5f, 0.5f, 0.5f});
    REQUIRE(v);
    CHECK(v->x == Catch::Approx(0.3f));
}

TEST_CASE("query prefers the containing voxel then the nearest neighbor") {
    RadianceCache cache;
    cache.resolution = 8;
    cache.bounds = {{0, 0, 0}, {8, 8, 8}};
    cache.voxels[cache.voxel_index({0.5f, 0.5f, 0.5f})] = Vec3(2.f);
    auto direct = cache.query({0.6f, 0.4f, 0.5f});
    REQUIRE(direct);
    CHECK(direct->x == 2.f);

    // adjacent empty voxel resolves to the neighbor
    auto nbr = cache.query({1.5f, 0.5f, 0.5f});
    REQUIRE(nbr);
    CHECK(nbr->x == 2.f);

    // beyond the 3-voxel radius it is a miss
    CHECK_FALSE(cache.query({7.5f, 7.5f, 7.5f}));
}

TEST_CASE("query picks the Euclidean nearest occupied voxel") {
    RadianceCache cache;
    cache.resolution = 16;
    cache.bounds = {{0, 0, 0}, {16, 16, 16}};
    cache.voxels[cache.voxel_index({5.5f, 8.5f, 8.5f})] = Vec3(1.f);  // 3 voxels left
    cache.voxels[cache.voxel_index({8.5f, 6.5f, 6.5f})] = Vec3(2.f);  // corner-ish, closer
    auto v = cache.query({8.5f, 8.5f, 8.5f});
    REQUIRE(v);
    CHECK(v->x == 2.f);  // sqrt(8) < 3
}

TEST_CASE("query is deterministic") {
    Scene scene = flat_wall_scene({0.7f, 0.3f, 0.1f});
    Bvh bvh = build_bvh(scene.mesh);
    RadianceCache cache = build_cache(scene, bvh, 32);
    Pcg32 rng(5);
    for (int i = 0; i < 1000; ++i) {
        Vec3 p{rng.next_float() * 2.f, rng.next_float() * 2.f, rng.next_float() * 2.f};
        auto a = cache.query(p);
        for (int r = 0; r < 3; ++r) {
            auto b = cache.query(p);
            REQUIRE(a.has_value() == b.has_value());
            if (a) REQUIRE(a->x == b->x);
        }
    }
}

TEST_CASE("build is independent of thread count up to fp noise") {
    Scene scene = flat_wall_scene({0.9f, 0.5f, 0.2f});
    // vary pixel values so pooling order matters
    Pcg32 rng(13);
    for (auto& v : scene.frames[0].data) v = rng.next_float();
    Bvh bvh = build_bvh(scene.mesh);
    RadianceCache one = build_cache(scene, bvh, 64, 1);
    RadianceCache many = build_cache(scene, bvh, 64, 4);
    REQUIRE(one.occupied_count() == many.occupied_count());
    for (const auto& [idx, v] : one.voxels) {
        auto it = many.voxels.find(idx);
        REQUIRE(it != many.voxels.end());
        CHECK(std::fabs(v.x - it->second.x) < 1e-6f * std::max(1.f, std::fabs(v.x)));
    }
}

TEST_CASE("degenerate scene with no hits is an error") {
    Scene scene = flat_wall_scene({1.f, 1.f, 1.f});
    // point the camera outward through the missing... shrink mesh far away
    for (auto& p : scene.mesh.positions) p += Vec3{100.f, 100.f, 100.f};
    scene.aabb = {{99.f, 99.f, 99.f}, {103.f, 103.f, 103.f}};
    Bvh bvh = build_bvh(scene.mesh);
    CHECK_THROWS(build_cache(scene, bvh, 32));
}

TEST_CASE("cache round trips through the binary dump") {
    Scene scene = flat_wall_scene({0.4f, 0.6f, 0.8f});
    Pcg32 rng(3);
    for (auto& v : scene.frames[0].data) v = rng.next_float() * 3.f;
    Bvh bvh = build_bvh(scene.mesh);
    RadianceCache cache = build_cache(scene, bvh, 48);
    auto dir = temp_dir("cache_io");
    save_cache(cache, dir + "/cache.bin");
    RadianceCache back = load_cache(dir + "/cache.bin");
    REQUIRE(back.resolution == cache.resolution);
    REQUIRE(back.occupied_count() == cache.occupied_count());
    for (const auto& [idx, v] : cache.voxels) {
        auto it = back.voxels.find(idx);
        REQUIRE(it != back.voxels.end());
        CHECK(it->second.x == v.x);
        CHECK(it->second.y == v.y);
        CHECK(it->second.z == v.z);
    }
}
