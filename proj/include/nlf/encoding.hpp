#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nlf/common.hpp"

namespace nlf {

// Positional encoding with windowed frequency easing. `progress` walks from 0
// (all bands closed) to num_bands (all bands open).
struct PosEncConfig {
    int num_bands = 8;
    bool include_input = true;
    double progress = 8;  // alpha in [0, num_bands]

    int encoded_dim(int input_dim) const {
        return input_dim * (include_input ? 1 : 0) + 2 * input_dim * num_bands;
    }
};

// Cosine easing per band: w_k = (1 - cos(pi * clamp(progress - k, 0, 1))) / 2.
template <typename T = double>
inline std::vector<T> window_weights(const PosEncConfig& cfg) {
    std::vector<T> w(cfg.num_bands);
    for (int k = 0; k < cfg.num_bands; ++k) {
        const double x = std::clamp(cfg.progress - k, 0.0, 1.0);
        w[k] = T((1.0 - std::cos(std::numbers::pi * x)) / 2.0);
    }
    return w;
}

// Encodes v as [v?, w_k sin(2^k pi v_d), w_k cos(2^k pi v_d)] grouped per band.
// Output layout: [input (optional)] then for k = 0..L-1: sin over all dims,
// cos over all dims.
template <typename T>
inline void posenc_into(const T* v, int dim, const PosEncConfig& cfg,
                        const std::vector<T>& weights, T* out) {
    int o = 0;
    if (cfg.include_input)
        for (int d = 0; d < dim; ++d) out[o++] = v[d];
    for (int k = 0; k < cfg.num_bands; ++k) {
        const T freq = T(std::ldexp(std::numbers::pi, k));  // 2^k * pi
        const T w = weights[k];
        for (int d = 0; d < dim; ++d) out[o + d] = w * std::sin(freq * v[d]);
        for (int d = 0; d < dim; ++d) out[o + dim + d] = w * std::cos(freq * v[d]);
        o += 2 * dim;
    }
}

template <typename T>
inline std::vector<T> posenc(const std::vector<T>& v, const PosEncConfig& cfg) {
    const auto w = window_weights<T>(cfg);
    std::vector<T> out(cfg.encoded_dim(int(v.size())));
    posenc_into(v.data(), int(v.size()), cfg, w, out.data());
    return out;
}

// d(encoded)/d(v): accumulates the pullback of `dout` into `dv`.
template <typename T>
inline void posenc_backward_into(const T* v, int dim, const PosEncConfig& cfg,
                                 const std::vector<T>& weights, const T* dout, T* dv) {
    int o = 0;
    if (cfg.include_input)
        for (int d = 0; d < dim; ++d) dv[d] += dout[o++];
    for (int k = 0; k < cfg.num_bands; ++k) {
        const T freq = T(std::ldexp(std::numbers::pi, k));
        const T w = weights[k];
        for (int d = 0; d < dim; ++d) {
            dv[d] += dout[o + d] * w * freq * std::cos(freq * v[d]);
            dv[d] -= dout[o + dim + d] * w * freq * std::sin(freq * v[d]);
        }
        o += 2 * dim;
    }
}

// Linear ramp of the easing position over the first ease_iters iterations.
inline double progress_at(long long iteration, long long ease_iters, int num_bands) {
    const double frac = std::min(double(iteration) / double(ease_iters), 1.0);
    return num_bands * frac;
}

}  // namespace nlf
