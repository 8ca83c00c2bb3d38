// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fipt/rng.hpp"

namespace fipt {

// Dense ReLU MLP with an optional residual connection between two hidden
// layers, linear output, parameters viewed in an external flat buffer
// (weights row-major, then biases, per layer). Templated on the scalar so
// gradient checks can run in double precision.
template <typename Real>
class Mlp {
public:
    std::vector<int> sizes;      // [input, hidden..., output]
    int residual_from = -1;      // hidden layer index (1-based), -1 = none
    int residual_to = -1;        // pre-activation of this layer receives a[from]

    Mlp() = default;
    explicit Mlp(std::vector<int> layer_sizes, int res_from = -1, int res_to = -1)
        : sizes(std::move(layer_sizes)), residual_from(res_from), residual_to(res_to) {
        if (sizes.size() < 2) throw std::runtime_error("Mlp: need at least input+output");
        if (residual_from >= 0 && sizes[residual_from] != sizes[residual_to])
            throw std::runtime_error("Mlp: residual endpoints must share a width");
    }

    int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
    int input_size() const { return sizes.front(); }
    int output_size() const { return sizes.back(); }

    size_t param_count() const {
        size_t n = 0;
        for (int l = 1; l < static_cast<int>(sizes.size()); ++l)
            n += static_cast<size_t>(sizes[l]) * sizes[l - 1] + sizes[l];
        return n;
    }

    size_t weight_offset(int layer) const {  // layer in [1, L]
        size_t off = 0;
        for (int l = 1; l < layer; ++l)
            off += static_cast<size_t>(sizes[l]) * sizes[l - 1] + sizes[l];
        return off;
    }
    size_t bias_offset(int layer) const {
        return weight_offset(layer) + static_cast<size_t>(sizes[layer]) * sizes[layer - 1];
    }

    // Kaiming-style uniform in +-sqrt(6 / fan_in); biases zero except the
    // final layer, which takes `final_bias`.
    void init(Real* params, Pcg32& rng, Real final_bias = Real(0)) const {
        for (int l = 1; l <= layer_count(); ++l) {
            Real bound = std::sqrt(Real(6) / Real(sizes[l - 1]));
            Real* w = params + weight_offset(l);
            for (int i = 0; i < sizes[l] * sizes[l - 1]; ++i)
                w[i] = (Real(rng.next_double()) * 2 - 1) * bound;
            Real* b = params + bias_offset(l);
            for (int i = 0; i < sizes[l]; ++i)
                b[i] = (l == layer_count()) ? final_bias : Real(0);
        }
    }

    // Activation storage: [input | a_1 | ... | a_{L-1} | output].
    size_t activation_count() const {
        size_t n = 0;
        for (int s : sizes) n += s;
        return n;
    }
    size_t activation_offset(int layer) const {  // layer 0 = input
        size_t off = 0;
        for (int l = 0; l < layer; ++l) off += sizes[l];
        return off;
    }

    void forward(const Real* params, const Real* input, std::vector<Real>& acts) const {
        acts.resize(activation_count());
        for (int i = 0; i < sizes[0]; ++i) acts[i] = input[i];
        for (int l = 1; l <= layer_count(); ++l) {
            const Real* w = params + weight_offset(l);
            const Real* b = params + bias_offset(l);
            const Real* in = acts.data() + activation_offset(l - 1);
            Real* out = acts.data() + activation_offset(l);
            int ni = sizes[l - 1], no = sizes[l];
            for (int o = 0; o < no; ++o) {
                Real z = b[o];
                const Real* wrow = w + static_cast<size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) z += wrow[i] * in[i];
                out[o] = z;
            }
            if (l == residual_to) {
                const Real* from = acts.data() + activation_offset(residual_from);
                for (int o = 0; o < no; ++o) out[o] += from[o];
            }
            if (l < layer_count())
                for (int o = 0; o < no; ++o) out[o] = out[o] > Real(0) ? out[o] : Real(0);
        }
    }

    const Real* output(const std::vector<Real>& acts) const {
        return acts.data() + activation_offset(layer_count());
    }

    // dout has output_size entries; gradients accumulate (+=) into dparams;
    // din (input_size) is overwritten when non-null.
    void backward(const Real* params, const std::vector<Real>& acts, const Real* dout,
                  Real* dparams, Real* din = nullptr) const {
        int L = layer_count();
        std::vector<Real> da(acts.size(), Real(0));
        {
            Real* d = da.data() + activation_offset(L);
            for (int o = 0; o < sizes[L]; ++o) d[o] = dout[o];
        }
        for (int l = L; l >= 1; --l) {
            int ni = sizes[l - 1], no = sizes[l];
            const Real* w = params + weight_offset(l);
            const Real* a_out = acts.data() + activation_offset(l);
            const Real* a_in = acts.data() + activation_offset(l - 1);
            Real* d_out = da.data() + activation_offset(l);
            Real* d_in = da.data() + activation_offset(l - 1);
            // dz: through ReLU except for the output layer
            if (l < L)
                for (int o = 0; o < no; ++o)
                    if (a_out[o] <= Real(0)) d_out[o] = Real(0);
            if (l == residual_to) {
                Real* d_from = da.data() + activation_offset(residual_from);
                for (int o = 0; o < no; ++o) d_from[o] += d_out[o];
            }
            Real* dw = dparams + weight_offset(l);
            Real* db = dparams + bias_offset(l);
            for (int o = 0; o < no; ++o) {
                Real g = d_out[o];
                if (g == Real(0)) continue;
                db[o] += g;
                Real* dwrow = dw + static_cast<size_t>(o) * ni;
                const Real* wrow = w + static_cast<size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) {
                    dwrow[i] += g * a_in[i];
                    d_in[i] += g * wrow[i];
                }
            }
        }
        if (din)
            for (int i = 0; i < sizes[0]; ++i) din[i] = da[i];
    }
};

// Adam with bias correction; lr = 0 leaves parameters bit-identical.
template <typename Real>
class Adam {
public:
    Real beta1 = Real(0.9), beta2 = Real(0.999), epsilon = Real(1e-8);

    void reset(size_t n) {
        m_.assign(n, Real(0));
        v_.assign(n, Real(0));
        t_ = 0;
    }

    void step(Real* params, const Real* grads, size_t n, Real lr) {
        if (m_.size() != n) reset(n);
        ++t_;
        Real c1 = Real(1) - std::pow(beta1, Real(t_));
        Real c2 = Real(1) - std::pow(beta2, Real(t_));
        for (size_t i = 0; i < n; ++i) {
            Real g = grads[i];
            m_[i] = beta1 * m_[i] + (Real(1) - beta1) * g;
            v_[i] = beta2 * v_[i] + (Real(1) - beta2) * g * g;
            Real mhat = m_[i] / c1;
            Real vhat = v_[i] / c2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
    }

    int64_t step_count() const { return t_; }

private:
    std::vector<Real> m_, v_;
    int64_t t_ = 0;
};

}  // namespace fipt
