// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "fipt/renderer.hpp"
#include "fipt/scene.hpp"
#include "test_util.hpp"

using namespace fipt;
using namespace fipt_test;

namespace {

Camera simple_camera(int res, const Vec3& eye, const Vec3& target, float focal_scale = 1.2f) {
    Camera cam;
    cam.width = cam.height = res;
    cam.fx = cam.fy = focal_scale * res;
    cam.cx = cam.cy = 0.5f * res;
    cam.to_world = look_at(eye, target);
    return cam;
}

// Floor quad (y=0) plus a small emitter quad overhead; no other geometry, so
// every floor pixel receives direct light only.
struct FloorLightScene {
    TriangleMesh mesh;
    Bvh bvh;
    Aabb bounds;
    EmitterSet emitters;
    BrdfParams floor_params;
    Vec3 light_radiance{6.f, 6.f, 6.f};
    Vec3 light_lo{-0.25f, 1.5f, -0.25f};
    Vec3 light_hi{0.25f, 1.5f, 0.25f};

    FloorLightScene() {
        auto add_quad = [&](Vec3 p0, Vec3 u, Vec3 v, Vec3 n) {
            uint32_t base = static_cast<uint32_t>(mesh.positions.size());
            mesh.positions.push_back(p0);
            mesh.positions.push_back(p0 + u);
            mesh.positions.push_back(p0 + u + v);
            mesh.positions.push_back(p0 + v);
            for (int i = 0; i < 4; ++i) mesh.normals.push_back(n);
            mesh.triangles.push_back({base, base + 1, base + 2});
            mesh.triangles.push_back({base, base + 2, base + 3});
        };
        add_quad({-2, 0, -2}, {4, 0, 0}, {0, 0, 4}, {0, 1, 0});  // floor
        add_quad(light_lo, {light_hi.x - light_lo.x, 0, 0}, {0, 0, light_hi.z - light_lo.z},
                 {0, -1, 0});  // light
        mesh.compute_areas();
        bvh = build_bvh(mesh);
        bounds = mesh.bounds();
        bounds.lo -= Vec3(0.1f);
        bounds.hi += Vec3(0.1f);
        emitters.triangles = {2, 3};
        emitters.radiance = {light_radiance, light_radiance};
        floor_params.base_color = {0.6f, 0.6f, 0.6f};
        floor_params.metallic = 0.f;
        floor_params.roughness = 1.f;
    }

    // quadrature reference of the direct radiance toward the camera at a
    // floor point
    Vec3 direct_reference(const Vec3& x, const Vec3& wo, int grid = 160) const {
        Vec3 n{0, 1, 0};
        double acc[3] = {0, 0, 0};
        Vec3 du = {(light_hi.x - light_lo.x) / grid, 0, 0};
        Vec3 dv = {0, 0, (light_hi.z - light_lo.z) / grid};
        double dA = static_cast<double>(du.x) * dv.z;
        for (int i = 0; i < grid; ++i) {
            for (int j = 0; j < grid; ++j) {
                Vec3 y = light_lo + du * (i + 0.5f) + dv * (j + 0.5f);
                Vec3 d = y - x;
                double d2 = length_squared(d);
                Vec3 wi = d / static_cast<float>(std::sqrt(d2));
                double cos_l = std::fabs(wi.y);  // light normal is -y, two-sided
                Vec3 f = eval_brdf(floor_params, wi, wo, n);
                double w = cos_l / d2 * dA;
                acc[0] += static_cast<double>(f.x) * light_radiance.x * w;
                acc[1] += static_cast<double>(f.y) * light_radiance.y * w;
                acc[2] += static_cast<double>(f.z) * light_radiance.z * w;
            }
        }
        return {static_cast<float>(acc[0]), static_cast<float>(acc[1]),
                static_cast<float>(acc[2])};
    }
};

}  // namespace

TEST_CASE("white furnace wall in a unit environment") {
    // large wall filling the frame, albedo-1 rough material, environment 1
    TriangleMesh mesh;
    mesh.positions = {{-20, -20, 2}, {20, -20, 2}, {20, 20, 2}, {-20, 20, 2}};
    mesh.normals.assign(4, {0, 0, -1});
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
    mesh.compute_areas();
    Bvh bvh = build_bvh(mesh);
    Aabb bounds = mesh.bounds();
    bounds.lo -= Vec3(0.5f);
    bounds.hi += Vec3(0.5f);

    EmitterSet env_only;
    env_only.environment = HdrImage(1, 1, Vec3(1.f));

    BrdfParams white;
    white.base_color = {1.f, 1.f, 1.f};
    white.metallic = 0.f;
    white.roughness = 1.f;
    auto material = [&](const Hit&) { return white; };

    Camera cam = simple_camera(128, {0.f, 0.f, 0.f}, {0.f, 0.f, 2.f});
    RenderConfig rc;
    rc.spp = 256;
    rc.seed = 3;
    rc.threads = 2;
    HdrImage img = path_trace(mesh, bvh, bounds, material, env_only, cam, rc);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        Vec3 c = img.at_index(p);
        REQUIRE(c.x == Catch::Approx(1.0).margin(0.02));
        REQUIRE(c.y == Catch::Approx(1.0).margin(0.02));
        REQUIRE(c.z == Catch::Approx(1.0).margin(0.02));
    }
}

TEST_CASE("direct lighting matches quadrature within 3 sigma") {
    FloorLightScene sc;
    auto material = [&](const Hit&) { return sc.floor_params; };
    Camera cam = simple_camera(16, {0.f, 1.0f, -1.4f}, {0.f, 0.f, 0.f});
    RenderConfig rc;
    rc.spp = 64;
    rc.threads = 2;

    const int runs = 24;
    std::vector<HdrImage> renders;
    for (int r = 0; r < runs; ++r) {
        rc.seed = 1000 + r;
        renders.push_back(path_trace(sc.mesh, sc.bvh, sc.bounds, material, sc.emitters, cam, rc));
    }
    Pcg32 pick(7);
    int checked = 0;
    for (int trial = 0; trial < 60 && checked < 8; ++trial) {
        int x = static_cast<int>(pick.next_below(16));
        int y = static_cast<int>(pick.next_below(16));
        auto hit = intersect(sc.bvh, sc.mesh, cam.primary_ray(x, y));
        if (!hit || hit->triangle > 1) continue;  // floor pixels only
        Vec3 wo = -cam.primary_ray(x, y).direction;
        Vec3 ref = sc.direct_reference(hit->position, wo);
        double mean = 0, m2 = 0;
        for (const auto& img : renders) mean += img.at(x, y).x;
        mean /= runs;
        for (const auto& img : renders) {
            double d = img.at(x, y).x - mean;
            m2 += d * d;
        }
        double se = std::sqrt(m2 / (runs - 1) / runs);
        REQUIRE(std::fabs(mean - ref.x) < 3.0 * se + 1e-3);
        ++checked;
    }
    REQUIRE(checked == 8);
}

TEST_CASE("doubling spp halves the variance") {
    FloorLightScene sc;
    auto material = [&](const Hit&) { return sc.floor_params; };
    Camera cam = simple_camera(8, {0.f, 1.0f, -1.4f}, {0.f, 0.f, 0.f});

    auto variance_at = [&](int spp, int runs) {
        std::vector<HdrImage> renders;
        RenderConfig rc;
        rc.spp = spp;
        rc.threads = 2;
        for (int r = 0; r < runs; ++r) {
            rc.seed = 40000 + r + spp * 1000;
            renders.push_back(
                path_trace(sc.mesh, sc.bvh, sc.bounds, material, sc.emitters, cam, rc));
        }
        double total = 0;
        int count = 0;
        for (int p = 0; p < 64; ++p) {
            double mean = 0, m2 = 0;
            for (const auto& img : renders) mean += img.at_index(p).x;
            mean /= runs;
            if (mean <= 1e-6) continue;
            for (const auto& img : renders) {
                double d = img.at_index(p).x - mean;
                m2 += d * d;
            }
            total += m2 / (runs - 1);
            ++count;
        }
        return total / count;
    };

    double v16 = variance_at(16, 60);
    double v32 = variance_at(32, 60);
    double ratio = v16 / v32;
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
}

TEST_CASE("a pixel directly viewing an emitter returns exactly its radiance") {
    FloorLightScene sc;
    auto material = [&](const Hit&) { return sc.floor_params; };
    Camera cam = simple_camera(4, {0.f, 0.75f, 0.f}, {0.f, 1.5f, 0.f});
    for (int spp : {2, 17}) {
        RenderConfig rc;
        rc.spp = spp;
        rc.seed = 5;
        HdrImage img = path_trace(sc.mesh, sc.bvh, sc.bounds, material, sc.emitters, cam, rc);
        auto hit = intersect(sc.bvh, sc.mesh, cam.primary_ray(2, 2));
        REQUIRE(hit);
        REQUIRE(sc.emitters.is_emitter(hit->triangle));
        CHECK(img.at(2, 2).x == sc.light_radiance.x);
        CHECK(img.at(2, 2).y == sc.light_radiance.y);
    }
}

TEST_CASE("renderer requires an emitter or environment") {
    FloorLightScene sc;
    auto material = [&](const Hit&) { return sc.floor_params; };
    Camera cam = simple_camera(4, {0.f, 1.f, -1.f}, {0.f, 0.f, 0.f});
    RenderConfig rc;
    rc.spp = 1;
    EmitterSet none;
    CHECK_THROWS(path_trace(sc.mesh, sc.bvh, sc.bounds, material, none, cam, rc));
}

TEST_CASE("synthetic dataset generation round trips") {
    GtSceneSpec spec;
    spec.box_size = {2.f, 2.f, 2.f};
    spec.width = spec.height = 24;
    spec.views = 2;
    spec.spp = 8;
    spec.walls["floor"] = GtMaterial{{0.5f, 0.5f, 0.5f}, 0.f, 1.f};
    GtQuadSpec light;
    light.wall = "ceiling";
    light.center = {0.5f, 0.5f};
    light.size = {0.4f, 0.4f};
    light.radiance = {5.f, 5.f, 5.f};
    spec.lights.push_back(light);
    GtQuadSpec panel;
    panel.wall = "back";
    panel.material.albedo = {0.8f, 0.8f, 0.8f};
    panel.material.roughness = 0.25f;
    panel.material.metallic = 0.9f;
    spec.panels.push_back(panel);

    auto dir = temp_dir("gen_synth");
    GtScene gt = gen_synthetic(spec, dir, 2);
    Scene loaded = load_scene(dir + "/scene.json");
    CHECK(loaded.view_count() == 2);
    CHECK(loaded.mesh.triangle_count() == gt.scene.mesh.triangle_count());

    Bvh bvh = build_bvh(loaded.mesh);
    int visible = 0, matching = 0;
    std::vector<bool> seen(loaded.mesh.triangle_count(), false);
    for (size_t v = 0; v < loaded.view_count(); ++v)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                if (auto hit = intersect(bvh, loaded.mesh, loaded.cameras[v].primary_ray(x, y)))
                    seen[hit->triangle] = true;
    for (size_t t = 0; t < seen.size(); ++t) {
        if (!seen[t]) continue;
        ++visible;
        if (loaded.part_labels[t] == gt.scene.part_labels[t]) ++matching;
    }
    REQUIRE(visible > 0);
    CHECK(static_cast<double>(matching) / visible >= 0.99);

    // GT maps reflect the spec constants where surfaces are visible
    HdrImage sigma = read_pfm(dir + "/gt/view_0000/sigma.pfm");
    HdrImage kd = read_pfm(dir + "/gt/view_0000/kd.pfm");
    HdrImage aprime = read_pfm(dir + "/gt/view_0000/aprime.pfm");
    const Camera& cam = loaded.cameras[0];
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) {
            auto hit = intersect(bvh, loaded.mesh, cam.primary_ray(x, y));
            if (!hit) continue;
            uint16_t part = gt.scene.part_labels[hit->triangle];
            const GtMaterial& m = gt.part_materials[part];
            REQUIRE(sigma.at(x, y).x == Catch::Approx(m.roughness));
            // diffuse pixels: a' ~ k_d plus the small dielectric specular tail
            if (m.roughness == 1.f && m.metallic == 0.f &&
                !gt.emitters.is_emitter(hit->triangle)) {
                REQUIRE(kd.at(x, y).x == Catch::Approx(m.albedo.x));
                REQUIRE(std::fabs(aprime.at(x, y).x - m.albedo.x) < 0.035f);
            }
        }
    }
}

TEST_CASE("metric identities") {
    HdrImage a(8, 8, Vec3{0.5f, 0.25f, 0.75f});
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK(emitter_iou({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(emitter_iou({1, 2}, {3, 4}) == 0.0);
    CHECK(emitter_iou({}, {}) == 1.0);

    HdrImage mask1(8, 8, Vec3(1.f));
    CHECK(emission_log_l2(a, a, mask_to_bytes(mask1), mask_to_bytes(mask1)) == 0.0);
}

TEST_CASE("psnr agrees with the closed form under known perturbation") {
    const int n = 64;
    HdrImage gt(n, n, Vec3(0.5f));
    HdrImage noisy = gt;
    Pcg32 rng(9);
    for (auto& v : noisy.data) v += (rng.next_float() * 2.f - 1.f) * 0.01f;
    double metric = psnr(noisy, gt);
    double se = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        double d = std::pow(static_cast<double>(noisy.data[i]), 1.0 / 2.2) -
                   std::pow(static_cast<double>(gt.data[i]), 1.0 / 2.2);
        se += d * d;
    }
    double rms = std::sqrt(se / gt.data.size());
    double by_hand = 20.0 * std::log10(1.0 / rms);
    CHECK(metric == Catch::Approx(by_hand).margin(0.01));
}

TEST_CASE("insert object: empty mesh, emitter brightening, mirror color") {
    Scene scene;
    scene.mesh = make_box({-1, 0, -1}, {1, 2, 1}, true);
    scene.aabb = {{-1.1f, -0.1f, -1.1f}, {1.1f, 2.1f, 1.1f}};
    scene.part_labels.assign(scene.mesh.triangle_count(), 0);
    scene.semantic_labels.assign(scene.mesh.triangle_count(), 0);
    // front wall (z = hi.z, triangles 10,11) is red; the mirror reflects it
    auto material = [&](const Hit& hit) {
        BrdfParams p;
        p.roughness = 1.f;
        p.base_color = (hit.triangle == 10 || hit.triangle == 11) ? Vec3{0.8f, 0.05f, 0.05f}
                                                                : Vec3{0.6f, 0.6f, 0.6f};
        return p;
    };
    EmitterSet emitters;
    emitters.triangles = {2, 3};  // ceiling
    emitters.radiance = {Vec3(4.f), Vec3(4.f)};

    Camera cam = simple_camera(24, {0.f, 1.f, 0.8f}, {0.f, 1.f, -1.f});
    RenderConfig rc;
    rc.spp = 48;
    rc.seed = 11;
    rc.threads = 2;

    TriangleMesh empty;
    Bvh bvh = build_bvh(scene.mesh);
    HdrImage base = path_trace(scene.mesh, bvh, scene.mesh.bounds(), material, emitters, cam, rc,
                               0x77);
    HdrImage same = insert_object(scene, material, emitters, empty, BrdfParams{}, Vec3(0.f), cam,
                                  rc, 0x77);
    REQUIRE(same.data == base.data);

    // inserting an emitter strictly brightens the scene
    TriangleMesh lamp;
    lamp.positions = {{-0.2f, 1.2f, 0.f}, {0.2f, 1.2f, 0.f}, {0.f, 1.5f, 0.f}};
    lamp.normals.assign(3, {0, 0, 1});
    lamp.triangles = {{0, 1, 2}};
    lamp.compute_areas();
    HdrImage brighter = insert_object(scene, material, emitters, lamp, BrdfParams{}, Vec3(6.f),
                                      cam, rc, 0x77);
    double mean_base = 0, mean_brighter = 0;
    for (size_t i = 0; i < base.data.size(); ++i) {
        mean_base += base.data[i];
        mean_brighter += brighter.data[i];
    }
    CHECK(mean_brighter > mean_base);

    // a mirror panel in front of the camera reflects the red front wall
    TriangleMesh mirror;
    mirror.positions = {{-0.3f, 0.7f, -0.2f}, {0.3f, 0.7f, -0.2f}, {0.3f, 1.3f, -0.2f},
                        {-0.3f, 1.3f, -0.2f}};
    mirror.normals.assign(4, {0, 0, 1});
    mirror.triangles = {{0, 1, 2}, {0, 2, 3}};
    mirror.compute_areas();
    BrdfParams mirror_params;
    mirror_params.base_color = {0.95f, 0.95f, 0.95f};
    mirror_params.metallic = 1.f;
    mirror_params.roughness = 0.02f;
    HdrImage with_mirror = insert_object(scene, material, emitters, mirror, mirror_params,
                                         Vec3(0.f), cam, rc, 0x77);
    double red = 0, blue = 0;
    for (int y = 10; y < 14; ++y)
        for (int x = 10; x < 14; ++x) {
            red += with_mirror.at(x, y).x;
            blue += with_mirror.at(x, y).z;
        }
    CHECK(red > 2.0 * blue);
}

TEST_CASE("re-rendering with the same settings reproduces the frame") {
    FloorLightScene sc;
    auto material = [&](const Hit&) { return sc.floor_params; };
    Camera cam = simple_camera(32, {0.f, 1.0f, -1.4f}, {0.f, 0.f, 0.f});
    RenderConfig rc;
    rc.spp = 512;
    rc.threads = 2;
    rc.seed = 1;
    HdrImage a = path_trace(sc.mesh, sc.bvh, sc.bounds, material, sc.emitters, cam, rc);
    rc.seed = 2;
    HdrImage b = path_trace(sc.mesh, sc.bvh, sc.bounds, material, sc.emitters, cam, rc);
    CHECK(psnr(a, b) > 40.0);
}
