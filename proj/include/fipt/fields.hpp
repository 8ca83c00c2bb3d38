// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipt/brdf.hpp"
#include "fipt/math.hpp"
#include "fipt/mlp.hpp"
#include "fipt/rng.hpp"

namespace fipt {

// ---------------------------------------------------------------------------
// BRDF field: multiresolution feature grid (dense below the table budget,
// spatially hashed above it) feeding a small sigmoid-output MLP.
// ---------------------------------------------------------------------------

struct GridConfig {
    int levels = 16;
    int base_resolution = 16;
    float growth = 1.5f;
    int features = 2;
    int log2_table_size = 19;
    int hidden = 64;
    int hidden_layers = 2;
};

template <typename Real>
struct BrdfFieldCache {
    // per level: lattice cell and fractional position
    std::vector<int> cell;     // 3 * levels
    std::vector<Real> frac;    // 3 * levels
    std::vector<Real> features;  // levels * features
    std::vector<Real> acts;    // MLP activations
    Real outputs[5];           // sigmoid outputs: albedo rgb, metallic, sigma
};

template <typename Real>
class BrdfFieldT {
public:
    GridConfig config;
    Aabb bounds;
    std::vector<Real> params;

    BrdfFieldT() = default;
    BrdfFieldT(const GridConfig& cfg, const Aabb& aabb, uint64_t seed) : config(cfg), bounds(aabb) {
        setup_layout();
        params.assign(total_params_, Real(0));
        Pcg32 rng(hash_combine(seed, 0xb12df1e1dull));
        for (size_t i = 0; i < grid_params_; ++i)
            params[i] = (Real(rng.next_double()) * 2 - 1) * Real(1e-4);
        mlp_.init(params.data() + grid_params_, rng);
    }

    size_t param_count() const { return total_params_; }
    size_t grid_param_count() const { return grid_params_; }
    const Mlp<Real>& mlp() const { return mlp_; }

    int level_resolution(int level) const { return level_res_[level]; }
    bool level_is_dense(int level) const { return level_dense_[level]; }

    void forward(const Vec3& world_pos, BrdfFieldCache<Real>& cache) const {
        Real x[3];
        normalize_position(world_pos, x);
        int L = config.levels, F = config.features;
        cache.cell.resize(3 * L);
        cache.frac.resize(3 * L);
        cache.features.assign(static_cast<size_t>(L) * F, Real(0));
        for (int l = 0; l < L; ++l) {
            int res = level_res_[l];
            int cell[3];
            Real frac[3];
            for (int a = 0; a < 3; ++a) {
                Real s = x[a] * res;
                int c = static_cast<int>(s);
                if (c >= res) c = res - 1;
                if (c < 0) c = 0;
                cell[a] = c;
                frac[a] = s - c;
                cache.cell[3 * l + a] = c;
                cache.frac[3 * l + a] = frac[a];
            }
            Real* feat = cache.features.data() + static_cast<size_t>(l) * F;
            for (int corner = 0; corner < 8; ++corner) {
                Real w = corner_weight(frac, corner);
                size_t entry = entry_index(l, cell, corner);
                const Real* t = params.data() + level_offset_[l] + entry * F;
                for (int f = 0; f < F; ++f) feat[f] += w * t[f];
            }
        }
        mlp_.forward(params.data() + grid_params_, cache.features.data(), cache.acts);
        const Real* raw = mlp_.output(cache.acts);
        for (int i = 0; i < 5; ++i) cache.outputs[i] = sigmoid(raw[i]);
    }

    // d_outputs are gradients w.r.t. the five sigmoid outputs. MLP gradients
    // go into `grads` (full-size buffer, +=) along with the feature-grid
    // scatter. For the two-phase parallel optimizer use backward_mlp +
    // scatter_grid instead.
    void backward(const BrdfFieldCache<Real>& cache, const Real d_outputs[5], Real* grads) const {
        std::vector<Real> dfeat(static_cast<size_t>(config.levels) * config.features);
        backward_mlp(cache, d_outputs, grads + grid_params_, dfeat.data());
        scatter_grid(cache, dfeat.data(), grads);
    }

    void backward_mlp(const BrdfFieldCache<Real>& cache, const Real d_outputs[5], Real* mlp_grads,
                      Real* dfeatures) const {
        Real draw[5];
        for (int i = 0; i < 5; ++i) {
            Real y = cache.outputs[i];
            draw[i] = d_outputs[i] * y * (Real(1) - y);
        }
        mlp_.backward(params.data() + grid_params_, cache.acts, draw, mlp_grads, dfeatures);
    }

    void scatter_grid(const BrdfFieldCache<Real>& cache, const Real* dfeatures,
                      Real* grid_grads) const {
        int L = config.levels, F = config.features;
        for (int l = 0; l < L; ++l) {
            const int* cell = cache.cell.data() + 3 * l;
            const Real* frac = cache.frac.data() + 3 * l;
            const Real* df = dfeatures + static_cast<size_t>(l) * F;
            for (int corner = 0; corner < 8; ++corner) {
                Real w = corner_weight(frac, corner);
                size_t entry = entry_index(l, cell, corner);
                Real* g = grid_grads + level_offset_[l] + entry * F;
                for (int f = 0; f < F; ++f) g[f] += w * df[f];
            }
        }
    }

    BrdfParams query(const Vec3& world_pos) const {
        BrdfFieldCache<Real> cache;
        forward(world_pos, cache);
        BrdfParams p;
        p.base_color = {static_cast<float>(cache.outputs[0]), static_cast<float>(cache.outputs[1]),
                        static_cast<float>(cache.outputs[2])};
        p.metallic = static_cast<float>(cache.outputs[3]);
        p.roughness = static_cast<float>(cache.outputs[4]);
        return p;
    }

    void normalize_position(const Vec3& p, Real x[3]) const {
        Vec3 ext = bounds.extent();
        x[0] = clamp(Real(p.x - bounds.lo.x) / Real(ext.x), Real(0), Real(1));
        x[1] = clamp(Real(p.y - bounds.lo.y) / Real(ext.y), Real(0), Real(1));
        x[2] = clamp(Real(p.z - bounds.lo.z) / Real(ext.z), Real(0), Real(1));
    }

    static Real sigmoid(Real z) { return Real(1) / (Real(1) + std::exp(-z)); }

private:
    void setup_layout() {
        size_t table_budget = size_t(1) << config.log2_table_size;
        level_res_.resize(config.levels);
        level_dense_.resize(config.levels);
        level_offset_.resize(config.levels);
        level_entries_.resize(config.levels);
        size_t off = 0;
        for (int l = 0; l < config.levels; ++l) {
            double r = config.base_resolution * std::pow(static_cast<double>(config.growth), l);
            int res = static_cast<int>(r);
            level_res_[l] = std::max(res, 1);
            size_t corners = static_cast<size_t>(level_res_[l] + 1);
            size_t dense_entries = corners * corners * corners;
            level_dense_[l] = dense_entries <= table_budget;
            level_entries_[l] = level_dense_[l] ? dense_entries : table_budget;
            level_offset_[l] = off;
            off += level_entries_[l] * config.features;
        }
        grid_params_ = off;
        std::vector<int> sizes{config.levels * config.features};
        for (int h = 0; h < config.hidden_layers; ++h) sizes.push_back(config.hidden);
        sizes.push_back(5);
        mlp_ = Mlp<Real>(sizes);
        total_params_ = grid_params_ + mlp_.param_count();
    }

    static Real corner_weight(const Real frac[3], int corner) {
        Real w = Real(1);
        for (int a = 0; a < 3; ++a)
            w *= (corner >> a) & 1 ? frac[a] : Real(1) - frac[a];
        return w;
    }

    size_t entry_index(int level, const int cell[3], int corner) const {
        uint32_t ix = static_cast<uint32_t>(cell[0] + ((corner >> 0) & 1));
        uint32_t iy = static_cast<uint32_t>(cell[1] + ((corner >> 1) & 1));
        uint32_t iz = static_cast<uint32_t>(cell[2] + ((corner >> 2) & 1));
        if (level_dense_[level]) {
            size_t c = static_cast<size_t>(level_res_[level] + 1);
            return ix + c * (iy + c * iz);
        }
        // spatial hash with the usual large-prime multipliers
        uint32_t h = ix * 1u ^ iy * 2654435761u ^ iz * 805459861u;
        return h & static_cast<uint32_t>(level_entries_[level] - 1);
    }

    Mlp<Real> mlp_;
    std::vector<int> level_res_;
    std::vector<char> level_dense_;
    std::vector<size_t> level_offset_;
    std::vector<size_t> level_entries_;
    size_t grid_params_ = 0;
    size_t total_params_ = 0;
};

// ---------------------------------------------------------------------------
// Emission mask field: frequency-encoded MLP with a mid residual; the scalar
// pre-activation e maps to a mask alpha = 1 - exp(-relu(e)) in [0, 1).
// ---------------------------------------------------------------------------

struct MaskConfig {
    int frequency_bands = 10;
    int hidden = 128;
    int hidden_layers = 6;
};

template <typename Real>
struct MaskFieldCache {
    std::vector<Real> encoded;
    std::vector<Real> acts;
    Real e = Real(0);      // pre-activation
    Real alpha = Real(0);  // 1 - exp(-relu(e))
};

template <typename Real>
class EmissionMaskFieldT {
public:
    MaskConfig config;
    Aabb bounds;
    std::vector<Real> params;

    EmissionMaskFieldT() = default;
    EmissionMaskFieldT(const MaskConfig& cfg, const Aabb& aabb, uint64_t seed)
        : config(cfg), bounds(aabb) {
        setup_layout();
        params.assign(mlp_.param_count(), Real(0));
        Pcg32 rng(hash_combine(seed, 0xe1f55ull));
        // bias the head negative so the mask starts (and stays) near zero
        mlp_.init(params.data(), rng, Real(-1));
    }

    size_t param_count() const { return params.size(); }
    const Mlp<Real>& mlp() const { return mlp_; }
    int input_size() const { return 3 + 6 * config.frequency_bands; }

    void forward(const Vec3& world_pos, MaskFieldCache<Real>& cache) const {
        encode(world_pos, cache.encoded);
        mlp_.forward(params.data(), cache.encoded.data(), cache.acts);
        cache.e = mlp_.output(cache.acts)[0];
        cache.alpha = cache.e > Real(0) ? Real(1) - std::exp(-cache.e) : Real(0);
    }

    // d_alpha: gradient w.r.t. the mask value; d_e: direct gradient w.r.t.
    // the pre-activation (the L1 regularizer feeds this one).
    void backward(const MaskFieldCache<Real>& cache, Real d_alpha, Real d_e, Real* grads) const {
        Real de = d_e;
        if (cache.e > Real(0)) de += d_alpha * std::exp(-cache.e);
        if (de == Real(0)) return;
        mlp_.backward(params.data(), cache.acts, &de, grads, nullptr);
    }

    float alpha_at(const Vec3& world_pos) const {
        MaskFieldCache<Real> cache;
        forward(world_pos, cache);
        return static_cast<float>(cache.alpha);
    }

    void encode(const Vec3& p, std::vector<Real>& out) const {
        Real x[3];
        Vec3 ext = bounds.extent();
        x[0] = clamp(Real(p.x - bounds.lo.x) / Real(ext.x), Real(0), Real(1)) * 2 - 1;
        x[1] = clamp(Real(p.y - bounds.lo.y) / Real(ext.y), Real(0), Real(1)) * 2 - 1;
        x[2] = clamp(Real(p.z - bounds.lo.z) / Real(ext.z), Real(0), Real(1)) * 2 - 1;
        out.resize(input_size());
        int o = 0;
        for (int a = 0; a < 3; ++a) out[o++] = x[a];
        for (int b = 0; b < config.frequency_bands; ++b) {
            Real freq = Real(kPi) * Real(uint64_t(1) << b);
            for (int a = 0; a < 3; ++a) {
                out[o++] = std::sin(freq * x[a]);
                out[o++] = std::cos(freq * x[a]);
            }
        }
    }

private:
    void setup_layout() {
        std::vector<int> sizes{input_size()};
        for (int h = 0; h < config.hidden_layers; ++h) sizes.push_back(config.hidden);
        sizes.push_back(1);
        int mid = 1 + config.hidden_layers / 2;  // residual into the middle layer
        mlp_ = Mlp<Real>(sizes, 1, mid);
    }

    Mlp<Real> mlp_;
};

using BrdfField = BrdfFieldT<float>;
using EmissionMaskField = EmissionMaskFieldT<float>;

// ---------------------------------------------------------------------------
// Checkpoints: architecture header + f32 parameter array, little endian.
// ---------------------------------------------------------------------------

namespace detail_fields {

inline void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_f32(std::ofstream& out, float v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
inline uint32_t read_u32(std::ifstream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline float read_f32(std::ifstream& in) {
    float v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

inline constexpr uint32_t kCheckpointMagic = 0x46434b50;  // "FCKP"

}  // namespace detail_fields

template <typename Real>
void save_brdf_field(const BrdfFieldT<Real>& field, const std::string& path) {
    using namespace detail_fields;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_brdf_field: cannot open " + path);
    write_u32(out, kCheckpointMagic);
    write_u32(out, 1);  // version
    write_u32(out, 0);  // kind: brdf
    write_u32(out, static_cast<uint32_t>(field.config.levels));
    write_u32(out, static_cast<uint32_t>(field.config.base_resolution));
    write_f32(out, field.config.growth);
    write_u32(out, static_cast<uint32_t>(field.config.features));
    write_u32(out, static_cast<uint32_t>(field.config.log2_table_size));
    write_u32(out, static_cast<uint32_t>(field.config.hidden));
    write_u32(out, static_cast<uint32_t>(field.config.hidden_layers));
    for (int a = 0; a < 3; ++a) write_f32(out, field.bounds.lo[a]);
    for (int a = 0; a < 3; ++a) write_f32(out, field.bounds.hi[a]);
    uint64_t n = field.params.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (Real p : field.params) write_f32(out, static_cast<float>(p));
    if (!out) throw std::runtime_error("save_brdf_field: write failed for " + path);
}

inline BrdfField load_brdf_field(const std::string& path) {
    using namespace detail_fields;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_brdf_field: cannot open " + path);
    if (read_u32(in) != kCheckpointMagic || read_u32(in) != 1 || read_u32(in) != 0)
        throw std::runtime_error("load_brdf_field: bad header in " + path);
    GridConfig cfg;
    cfg.levels = static_cast<int>(read_u32(in));
    cfg.base_resolution = static_cast<int>(read_u32(in));
    cfg.growth = read_f32(in);
    cfg.features = static_cast<int>(read_u32(in));
    cfg.log2_table_size = static_cast<int>(read_u32(in));
    cfg.hidden = static_cast<int>(read_u32(in));
    cfg.hidden_layers = static_cast<int>(read_u32(in));
    Aabb box;
    for (int a = 0; a < 3; ++a) box.lo[a] = read_f32(in);
    for (int a = 0; a < 3; ++a) box.hi[a] = read_f32(in);
    BrdfField field(cfg, box, 0);
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (n != field.params.size())
        throw std::runtime_error("load_brdf_field: parameter count mismatch in " + path);
    for (size_t i = 0; i < n; ++i) field.params[i] = read_f32(in);
    if (!in) throw std::runtime_error("load_brdf_field: truncated " + path);
    return field;
}

template <typename Real>
void save_mask_field(const EmissionMaskFieldT<Real>& field, const std::string& path) {
    using namespace detail_fields;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_mask_field: cannot open " + path);
    write_u32(out, kCheckpointMagic);
    write_u32(out, 1);
    write_u32(out, 1);  // kind: mask
    write_u32(out, static_cast<uint32_t>(field.config.frequency_bands));
    write_u32(out, static_cast<uint32_t>(field.config.hidden));
    write_u32(out, static_cast<uint32_t>(field.config.hidden_layers));
    for (int a = 0; a < 3; ++a) write_f32(out, field.bounds.lo[a]);
    for (int a = 0; a < 3; ++a) write_f32(out, field.bounds.hi[a]);
    uint64_t n = field.params.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (Real p : field.params) write_f32(out, static_cast<float>(p));
    if (!out) throw std::runtime_error("save_mask_field: write failed for " + path);
}

inline EmissionMaskField load_mask_field(const std::string& path) {
    using namespace detail_fields;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_mask_field: cannot open " + path);
    if (read_u32(in) != kCheckpointMagic || read_u32(in) != 1 || read_u32(in) != 1)
        throw std::runtime_error("load_mask_field: bad header in " + path);
    MaskConfig cfg;
    cfg.frequency_bands = static_cast<int>(read_u32(in));
    cfg.hidden = static_cast<int>(read_u32(in));
    cfg.hidden_layers = static_cast<int>(read_u32(in));
    Aabb box;
    for (int a = 0; a < 3; ++a) box.lo[a] = read_f32(in);
    for (int a = 0; a < 3; ++a) box.hi[a] = read_f32(in);
    EmissionMaskField field(cfg, box, 0);
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (n != field.params.size())
        throw std::runtime_error("load_mask_field: parameter count mismatch in " + path);
    for (size_t i = 0; i < n; ++i) field.params[i] = read_f32(in);
    if (!in) throw std::runtime_error("load_mask_field: truncated " + path);
    return field;
}

}  // namespace fipt
