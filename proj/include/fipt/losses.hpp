// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipt/emitter.hpp"
#include "fipt/fields.hpp"
#include "fipt/parallel.hpp"
#include "fipt/scene.hpp"
#include "fipt/shading.hpp"
#include "fipt/tonemap.hpp"

namespace fipt {

struct OptimConfig {
    float lr = 1e-3f;
    int batch = 8192;
    int epochs = 2;
    float lambda_e = 1.f;
    float lambda_d = 5e-4f;
    float lambda_p_part = 5e-3f;
    float lambda_p_semantic = 1e-3f;
    float sigma_a = 1.6e-2f;
    float sigma_x = 1e-2f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float adam_eps = 1e-8f;
    uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (lr < 0.f || batch <= 0 || epochs <= 0)
            throw std::runtime_error("OptimConfig: lr/batch/epochs invalid");
        if (sigma_a <= 0.f || sigma_x <= 0.f)
            throw std::runtime_error("OptimConfig: kernel widths must be positive");
    }
};

enum class Grouping { Part, Semantic };

// One training pixel: ground-truth radiance plus the baked shading inputs of
// the factorized render at its primary hit.
struct PixelSample {
    Vec3 radiance_gt;
    Vec3 position;  // world space
    Vec3 ld;
    std::array<Vec3, kRoughnessLevels> ls0;
    std::array<Vec3, kRoughnessLevels> ls1;
    uint16_t part = 0;
    uint16_t semantic = 0;
};

struct TrainingSet {
    std::vector<PixelSample> pixels;
};

// Pixels with valid primary hits; when the emitter set is known, its pixels
// are excluded (their radiance is emission, already solved in closed form).
inline TrainingSet build_training_set(const Scene& scene, const ShadingBuffers& shadings,
                                      const EmitterSet* emitters_known = nullptr) {
    TrainingSet set;
    for (size_t v = 0; v < shadings.views.size(); ++v) {
        const ViewShading& view = shadings.views[v];
        const HdrImage& frame = scene.frames[v];
        for (int y = 0; y < view.height; ++y) {
            for (int x = 0; x < view.width; ++x) {
                const HitRecord& hit = view.hits[static_cast<size_t>(y) * view.width + x];
                if (!hit.valid()) continue;
                uint32_t tri = static_cast<uint32_t>(hit.triangle);
                if (emitters_known && emitters_known->is_emitter(tri)) continue;
                PixelSample px;
                px.radiance_gt = frame.at(x, y);
                px.position = hit.position;
                px.ld = view.diffuse.at(x, y);
                for (int k = 0; k < kRoughnessLevels; ++k) {
                    px.ls0[k] = view.spec0[k].at(x, y);
                    px.ls1[k] = view.spec1[k].at(x, y);
                }
                px.part = scene.part_labels[tri];
                px.semantic = scene.semantic_labels[tri];
                set.pixels.push_back(px);
            }
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Batch evaluation. Losses are means over the batch:
//   render    | Gamma((1-alpha) L_r + alpha L_gt) - Gamma(L_gt) |^2
//   emission  lambda_e |e|                      (mask pre-activation L1)
//   diffuse   lambda_d (|1 - sigma| + |m|)
//   part      lambda_p |(sigma, m) - (sigma', m')|  (kernel-weighted targets,
//             stop-gradient on targets and weights)
// ---------------------------------------------------------------------------

template <typename Real>
struct LossTerms {
    Real render = 0, emission = 0, diffuse = 0, part = 0;
    Real total() const { return render + emission + diffuse + part; }
    bool finite() const {
        return std::isfinite(render) && std::isfinite(emission) && std::isfinite(diffuse) &&
               std::isfinite(part);
    }
};

template <typename Real>
struct BatchEval {
    std::vector<const PixelSample*> pixels;
    std::vector<BrdfFieldCache<Real>> brdf;
    std::vector<MaskFieldCache<Real>> mask;  // empty when the mask is frozen off
    // accumulated per-pixel output gradients
    std::vector<Real> d_brdf;   // 5 per pixel
    std::vector<Real> d_alpha;  // per pixel
    std::vector<Real> d_e;      // per pixel
};

namespace detail_loss {

template <typename Real>
void lerp_levels(const PixelSample& px, Real sigma, Real ls0[3], Real ls1[3], Real dls0[3],
                 Real dls1[3]) {
    Real s = clamp(sigma, Real(0), Real(1)) * (kRoughnessLevels - 1);
    int k0 = std::min(static_cast<int>(s), kRoughnessLevels - 2);
    Real t = s - Real(k0);
    Real slope = Real(kRoughnessLevels - 1);
    for (int c = 0; c < 3; ++c) {
        Real a0 = Real(px.ls0[k0][c]), b0 = Real(px.ls0[k0 + 1][c]);
        Real a1 = Real(px.ls1[k0][c]), b1 = Real(px.ls1[k0 + 1][c]);
        ls0[c] = a0 + (b0 - a0) * t;
        ls1[c] = a1 + (b1 - a1) * t;
        dls0[c] = (b0 - a0) * slope;
        dls1[c] = (b1 - a1) * slope;
    }
}

template <typename Real>
FactorizedEval<Real> factorized_at(const PixelSample& px, const BrdfFieldCache<Real>& cache) {
    Real ls0[3], ls1[3], dls0[3], dls1[3];
    lerp_levels(px, cache.outputs[4], ls0, ls1, dls0, dls1);
    Real ld[3] = {Real(px.ld.x), Real(px.ld.y), Real(px.ld.z)};
    Real albedo[3] = {cache.outputs[0], cache.outputs[1], cache.outputs[2]};
    return factorized_render_t<Real>(ld, ls0, ls1, dls0, dls1, albedo, cache.outputs[3]);
}

}  // namespace detail_loss

// Masked tone-mapped render loss. Accumulates d_brdf and d_alpha.
template <typename Real>
Real loss_masked_render(BatchEval<Real>& ev, bool with_grad = true) {
    size_t n = ev.pixels.size();
    if (n == 0) return Real(0);
    Real inv_n = Real(1) / Real(n);
    Real total = 0;
    for (size_t i = 0; i < n; ++i) {
        const PixelSample& px = *ev.pixels[i];
        auto fr = detail_loss::factorized_at(px, ev.brdf[i]);
        Real alpha = ev.mask.empty() ? Real(0) : ev.mask[i].alpha;
        Real d_lr[3], d_alpha_acc = 0;
        for (int c = 0; c < 3; ++c) {
            Real gt = Real(px.radiance_gt[c]);
            Real lr = fr.value[c];
            Real arg = (Real(1) - alpha) * lr + alpha * gt;
            Real r = tonemap_scalar(arg) - tonemap_scalar(gt);
            total += r * r;
            Real dr = Real(2) * r * tonemap_scalar_deriv(arg);
            d_lr[c] = dr * (Real(1) - alpha);
            d_alpha_acc += dr * (gt - lr);
        }
        if (!with_grad) continue;
        Real* d = ev.d_brdf.data() + 5 * i;
        for (int c = 0; c < 3; ++c) {
            d[c] += inv_n * d_lr[c] * fr.d_albedo[c];
            d[3] += inv_n * d_lr[c] * fr.d_metallic[c];
            d[4] += inv_n * d_lr[c] * fr.d_sigma[c];
        }
        if (!ev.mask.empty()) ev.d_alpha[i] += inv_n * d_alpha_acc;
    }
    return total * inv_n;
}

// L1 on the mask pre-activation; subgradient 0 at e == 0.
template <typename Real>
Real loss_emission_reg(BatchEval<Real>& ev, Real lambda_e, bool with_grad = true) {
    if (ev.mask.empty() || ev.pixels.empty()) return Real(0);
    size_t n = ev.pixels.size();
    Real inv_n = Real(1) / Real(n);
    Real total = 0;
    for (size_t i = 0; i < n; ++i) {
        Real e = ev.mask[i].e;
        total += std::abs(e);
        if (with_grad && e != Real(0))
            ev.d_e[i] += lambda_e * inv_n * (e > Real(0) ? Real(1) : Real(-1));
    }
    return lambda_e * total * inv_n;
}

// Diffuse prior: pull roughness to 1 and metallic to 0.
template <typename Real>
Real loss_diffuse_prior(BatchEval<Real>& ev, Real lambda_d, bool with_grad = true) {
    size_t n = ev.pixels.size();
    if (n == 0) return Real(0);
    Real inv_n = Real(1) / Real(n);
    Real total = 0;
    for (size_t i = 0; i < n; ++i) {
        Real sigma = ev.brdf[i].outputs[4];
        Real m = ev.brdf[i].outputs[3];
        total += std::abs(Real(1) - sigma) + std::abs(m);
        if (!with_grad) continue;
        Real* d = ev.d_brdf.data() + 5 * i;
        if (sigma != Real(1)) d[4] += lambda_d * inv_n * (sigma < Real(1) ? Real(-1) : Real(1));
        if (m != Real(0)) d[3] += lambda_d * inv_n * (m > Real(0) ? Real(1) : Real(-1));
    }
    return lambda_d * total * inv_n;
}

// Roughness-metallic propagation. Targets and kernel weights are detached:
// gradients flow only through each pixel's own (sigma, m). Part mode weights
// by highlight magnitude w(x') = |k_s Ls0 + Ls1|_1; semantic mode by the
// albedo/position similarity kernel w(x, x').
template <typename Real>
Real loss_part_propagation(BatchEval<Real>& ev, Grouping grouping, Real lambda_p, Real sigma_a,
                           Real sigma_x, const BrdfFieldT<Real>& field, bool with_grad = true) {
    size_t n = ev.pixels.size();
    if (n == 0) return Real(0);
    Real inv_n = Real(1) / Real(n);

    // detached per-pixel values
    std::vector<Real> sig(n), met(n), highlight(n);
    std::vector<std::array<Real, 3>> alb(n), pos(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& out = ev.brdf[i].outputs;
        sig[i] = out[4];
        met[i] = out[3];
        alb[i] = {out[0], out[1], out[2]};
        Real x[3];
        field.normalize_position(ev.pixels[i]->position, x);
        pos[i] = {x[0], x[1], x[2]};
        Real ls0[3], ls1[3], d0[3], d1[3];
        detail_loss::lerp_levels(*ev.pixels[i], sig[i], ls0, ls1, d0, d1);
        Real h = 0;
        for (int c = 0; c < 3; ++c) {
            Real k_s = Real(0.04) * (Real(1) - met[i]) + alb[i][c] * met[i];
            h += std::abs(k_s * ls0[c] + ls1[c]);
        }
        highlight[i] = h;
    }

    // group pixels by their segmentation id
    std::vector<std::pair<uint16_t, size_t>> keyed(n);
    for (size_t i = 0; i < n; ++i) {
        uint16_t g = grouping == Grouping::Part ? ev.pixels[i]->part : ev.pixels[i]->semantic;
        keyed[i] = {g, i};
    }
    std::sort(keyed.begin(), keyed.end());

    Real total = 0;
    size_t gi = 0;
    while (gi < n) {
        size_t gj = gi;
        while (gj < n && keyed[gj].first == keyed[gi].first) ++gj;

        if (grouping == Grouping::Part) {
            Real wsum = 0, tsig = 0, tmet = 0;
            for (size_t k = gi; k < gj; ++k) {
                size_t i = keyed[k].second;
                wsum += highlight[i];
                tsig += highlight[i] * sig[i];
                tmet += highlight[i] * met[i];
            }
            if (wsum > Real(0)) {
                tsig /= wsum;
                tmet /= wsum;
                for (size_t k = gi; k < gj; ++k) {
                    size_t i = keyed[k].second;
                    total += std::abs(sig[i] - tsig) + std::abs(met[i] - tmet);
                    if (!with_grad) continue;
                    Real* d = ev.d_brdf.data() + 5 * i;
                    if (sig[i] != tsig)
                        d[4] += lambda_p * inv_n * (sig[i] > tsig ? Real(1) : Real(-1));
                    if (met[i] != tmet)
                        d[3] += lambda_p * inv_n * (met[i] > tmet ? Real(1) : Real(-1));
                }
            }
        } else {
            Real inv_2sa2 = Real(1) / (Real(2) * sigma_a * sigma_a);
            Real inv_2sx2 = Real(1) / (Real(2) * sigma_x * sigma_x);
            for (size_t k = gi; k < gj; ++k) {
                size_t i = keyed[k].second;
                Real wsum = 0, tsig = 0, tmet = 0;
                for (size_t k2 = gi; k2 < gj; ++k2) {
                    size_t j = keyed[k2].second;
                    Real da2 = 0, dx2 = 0;
                    for (int c = 0; c < 3; ++c) {
                        Real da = alb[i][c] - alb[j][c];
                        da2 += da * da;
                        Real dx = pos[i][c] - pos[j][c];
                        dx2 += dx * dx;
                    }
                    Real w = std::exp(-da2 * inv_2sa2) * std::exp(-dx2 * inv_2sx2);
                    wsum += w;
                    tsig += w * sig[j];
                    tmet += w * met[j];
                }
                if (wsum <= Real(0)) continue;
                tsig /= wsum;
                tmet /= wsum;
                total += std::abs(sig[i] - tsig) + std::abs(met[i] - tmet);
                if (!with_grad) continue;
                Real* d = ev.d_brdf.data() + 5 * i;
                if (sig[i] != tsig)
                    d[4] += lambda_p * inv_n * (sig[i] > tsig ? Real(1) : Real(-1));
                if (met[i] != tmet)
                    d[3] += lambda_p * inv_n * (met[i] > tmet ? Real(1) : Real(-1));
            }
        }
        gi = gj;
    }
    return lambda_p * total * inv_n;
}

// ---------------------------------------------------------------------------
// Full batch evaluation used by the optimizer and by the gradient checks.
// ---------------------------------------------------------------------------

template <typename Real>
struct BatchLossResult {
    LossTerms<Real> terms;
};

// Forward both fields for the batch, evaluate every active loss term, and
// (optionally) accumulate parameter gradients. Grid scatter runs serially in
// pixel order; MLP gradients are reduced over fixed chunks, so results are
// reproducible for a fixed thread count and exactly deterministic with one.
template <typename Real>
LossTerms<Real> evaluate_batch(const std::vector<const PixelSample*>& batch,
                               BrdfFieldT<Real>& brdf_field, EmissionMaskFieldT<Real>* mask_field,
                               const OptimConfig& config, Grouping grouping,
                               Real* brdf_grads,  // null = value only
                               Real* mask_grads) {
    size_t n = batch.size();
    BatchEval<Real> ev;
    ev.pixels = batch;
    ev.brdf.resize(n);
    if (mask_field) ev.mask.resize(n);
    ev.d_brdf.assign(5 * n, Real(0));
    ev.d_alpha.assign(n, Real(0));
    ev.d_e.assign(n, Real(0));

    parallel_for(static_cast<int64_t>(n), config.threads, [&](int64_t b, int64_t e, int) {
        for (int64_t i = b; i < e; ++i) {
            brdf_field.forward(batch[i]->position, ev.brdf[i]);
            if (mask_field) mask_field->forward(batch[i]->position, ev.mask[i]);
        }
    });

    bool with_grad = brdf_grads != nullptr;
    LossTerms<Real> terms;
    terms.render = loss_masked_render(ev, with_grad);
    if (mask_field) terms.emission = loss_emission_reg(ev, Real(config.lambda_e), with_grad);
    terms.diffuse = loss_diffuse_prior(ev, Real(config.lambda_d), with_grad);
    Real lambda_p =
        grouping == Grouping::Part ? Real(config.lambda_p_part) : Real(config.lambda_p_semantic);
    terms.part = loss_part_propagation(ev, grouping, lambda_p, Real(config.sigma_a),
                                       Real(config.sigma_x), brdf_field, with_grad);
    if (!with_grad) return terms;

    // backprop: per-chunk MLP gradient buffers merged in chunk order, then a
    // serial feature-grid scatter in pixel order
    int threads = resolve_threads(config.threads);
    int chunks = std::min<int>(threads, static_cast<int>(std::max<size_t>(n, 1)));
    size_t mlp_params = brdf_field.mlp().param_count();
    std::vector<std::vector<Real>> mlp_partials(chunks, std::vector<Real>(mlp_params, Real(0)));
    std::vector<std::vector<Real>> mask_partials;
    if (mask_field && mask_grads)
        mask_partials.assign(chunks, std::vector<Real>(mask_field->param_count(), Real(0)));
    std::vector<Real> dfeatures(n * static_cast<size_t>(brdf_field.config.levels) *
                                brdf_field.config.features);

    parallel_for(static_cast<int64_t>(n), chunks, [&](int64_t b, int64_t e, int worker) {
        size_t fdim = static_cast<size_t>(brdf_field.config.levels) * brdf_field.config.features;
        for (int64_t i = b; i < e; ++i) {
            brdf_field.backward_mlp(ev.brdf[i], ev.d_brdf.data() + 5 * i,
                                    mlp_partials[worker].data(), dfeatures.data() + i * fdim);
            if (mask_field && mask_grads)
                mask_field->backward(ev.mask[i], ev.d_alpha[i], ev.d_e[i],
                                     mask_partials[worker].data());
        }
    });

    size_t fdim = static_cast<size_t>(brdf_field.config.levels) * brdf_field.config.features;
    for (size_t i = 0; i < n; ++i)
        brdf_field.scatter_grid(ev.brdf[i], dfeatures.data() + i * fdim, brdf_grads);
    Real* mlp_dst = brdf_grads + brdf_field.grid_param_count();
    for (int c = 0; c < chunks; ++c)
        for (size_t p = 0; p < mlp_params; ++p) mlp_dst[p] += mlp_partials[c][p];
    if (mask_field && mask_grads)
        for (int c = 0; c < chunks; ++c)
            for (size_t p = 0; p < mask_field->param_count(); ++p)
                mask_grads[p] += mask_partials[c][p];
    return terms;
}

struct LossCurveRow {
    int epoch = 0;
    int step = 0;
    double render = 0, emission = 0, diffuse = 0, part = 0;
};

inline void save_loss_curve(const std::vector<LossCurveRow>& rows, const std::string& path) {
    std::ofstream out(path);
    out << "epoch,step,render,emission,diffuse,part\n";
    for (const auto& r : rows)
        out << r.epoch << "," << r.step << "," << r.render << "," << r.emission << ","
            << r.diffuse << "," << r.part << "\n";
    if (!out) throw std::runtime_error("save_loss_curve: write failed for " + path);
}

// Adam over shuffled pixel batches. mask_field may be null (frozen mask /
// known emitters). Throws on non-finite losses.
template <typename Real>
std::vector<LossCurveRow> optimize_stage2(const TrainingSet& set, BrdfFieldT<Real>& brdf_field,
                                          EmissionMaskFieldT<Real>* mask_field,
                                          const OptimConfig& config, Grouping grouping) {
    config.validate();
    if (set.pixels.empty()) throw std::runtime_error("optimize_stage2: empty training set");

    Adam<Real> brdf_adam, mask_adam;
    brdf_adam.beta1 = mask_adam.beta1 = Real(config.beta1);
    brdf_adam.beta2 = mask_adam.beta2 = Real(config.beta2);
    brdf_adam.epsilon = mask_adam.epsilon = Real(config.adam_eps);

    std::vector<Real> brdf_grads(brdf_field.param_count());
    std::vector<Real> mask_grads(mask_field ? mask_field->param_count() : 0);
    std::vector<size_t> order(set.pixels.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::vector<LossCurveRow> curve;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Pcg32 shuffle_rng(hash_combine(config.seed, 0x5affe1u, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(static_cast<uint32_t>(i))]);

        int step = 0;
        for (size_t begin = 0; begin < order.size(); begin += config.batch, ++step) {
            size_t end = std::min(order.size(), begin + config.batch);
            std::vector<const PixelSample*> batch;
            batch.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) batch.push_back(&set.pixels[order[i]]);

            std::fill(brdf_grads.begin(), brdf_grads.end(), Real(0));
            std::fill(mask_grads.begin(), mask_grads.end(), Real(0));
            LossTerms<Real> terms =
                evaluate_batch(batch, brdf_field, mask_field, config, grouping,
                               brdf_grads.data(), mask_field ? mask_grads.data() : nullptr);
            if (!terms.finite())
                throw std::runtime_error("optimize_stage2: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));

            brdf_adam.step(brdf_field.params.data(), brdf_grads.data(), brdf_field.param_count(),
                           Real(config.lr));
            if (mask_field)
                mask_adam.step(mask_field->params.data(), mask_grads.data(),
                               mask_field->param_count(), Real(config.lr));
            curve.push_back({epoch, step, static_cast<double>(terms.render),
                             static_cast<double>(terms.emission),
                             static_cast<double>(terms.diffuse),
                             static_cast<double>(terms.part)});
        }
    }
    return curve;
}

}  // namespace fipt
