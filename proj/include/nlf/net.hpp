#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "nlf/common.hpp"

namespace nlf {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Skip-connected MLP: `depth` hidden layers of `width` units, ReLU hidden
// activations, linear output. The raw input is re-concatenated at
// `skip_layer` (0 disables the skip).
template <typename T>
struct Mlp {
    int input_dim = 0;
    int output_dim = 0;
    int width = 0;
    int depth = 0;       // hidden layers
    int skip_layer = 0;  // hidden layer index receiving [h, input]

    std::vector<Matrix<T>> weights;  // layer l: (in_l x out_l)
    std::vector<RowVector<T>> biases;

    int num_layers() const { return depth + 1; }

    int layer_input_dim(int l) const {
        if (l == 0) return input_dim;
        if (l == skip_layer && skip_layer > 0) return width + input_dim;
        return width;
    }
    int layer_output_dim(int l) const { return l == depth ? output_dim : width; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (int l = 0; l < num_layers(); ++l)
            n += std::size_t(layer_input_dim(l)) * layer_output_dim(l) + layer_output_dim(l);
        return n;
    }
};

// Uniform fan-based init (bound sqrt(6 / (fan_in + fan_out))), zero biases.
template <typename T>
inline Mlp<T> mlp_init(int input_dim, int output_dim, int width, int depth,
                       int skip_layer, Rng& rng) {
    if (input_dim <= 0 || output_dim <= 0 || width <= 0 || depth < 0)
        throw ShapeMismatch("mlp_init: non-positive dimension");
    Mlp<T> m;
    m.input_dim = input_dim;
    m.output_dim = output_dim;
    m.width = width;
    m.depth = depth;
    m.skip_layer = skip_layer;
    m.weights.resize(m.num_layers());
    m.biases.resize(m.num_layers());
    for (int l = 0; l < m.num_layers(); ++l) {
        const int fin = m.layer_input_dim(l), fout = m.layer_output_dim(l);
        const double a = std::sqrt(6.0 / (fin + fout));
        m.weights[l].resize(fin, fout);
        for (int i = 0; i < fin; ++i)
            for (int j = 0; j < fout; ++j) m.weights[l](i, j) = T(rng.uniform(-a, a));
        m.biases[l] = RowVector<T>::Zero(fout);
    }
    return m;
}

template <typename T>
inline Mlp<T> mlp_init(int input_dim, int output_dim, int width, int depth,
                       int skip_layer, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "mlp_init");
    return mlp_init<T>(input_dim, output_dim, width, depth, skip_layer, rng);
}

template <typename T>
struct ForwardCache {
    Matrix<T> input;                    // B x input_dim
    std::vector<Matrix<T>> activations; // post-ReLU output of each hidden layer
};

// Returns the linear output head; hidden layers apply ReLU.
template <typename T>
inline Matrix<T> mlp_forward(const Mlp<T>& m, const Matrix<T>& x,
                             std::type_identity_t<ForwardCache<T>>* cache) {
    if (x.cols() != m.input_dim)
        throw ShapeMismatch("mlp_forward: input width " + std::to_string(x.cols()) +
                            " != " + std::to_string(m.input_dim));
    if (cache) {
        cache->input = x;
        cache->activations.assign(m.depth, Matrix<T>());
    }
    Matrix<T> h = x;
    for (int l = 0; l < m.depth; ++l) {
        if (l == m.skip_layer && m.skip_layer > 0) {
            Matrix<T> cat(h.rows(), h.cols() + x.cols());
            cat << h, x;
            h = std::move(cat);
        }
        h = (h * m.weights[l]).rowwise() + m.biases[l];
        h = h.cwiseMax(T(0));
        if (cache) cache->activations[l] = h;
    }
    if (m.depth == m.skip_layer && m.skip_layer > 0) {
        Matrix<T> cat(h.rows(), h.cols() + x.cols());
        cat << h, x;
        h = std::move(cat);
    }
    return (h * m.weights[m.depth]).rowwise() + m.biases[m.depth];
}

template <typename T>
struct MlpGrads {
    std::vector<Matrix<T>> weights;
    std::vector<RowVector<T>> biases;

    static MlpGrads zeros_like(const Mlp<T>& m) {
        MlpGrads g;
        g.weights.resize(m.num_layers());
        g.biases.resize(m.num_layers());
        for (int l = 0; l < m.num_layers(); ++l) {
            g.weights[l] = Matrix<T>::Zero(m.layer_input_dim(l), m.layer_output_dim(l));
            g.biases[l] = RowVector<T>::Zero(m.layer_output_dim(l));
        }
        return g;
    }

    void accumulate(const MlpGrads& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] += o.weights[l];
            biases[l] += o.biases[l];
        }
    }
};

// Exact reverse-mode gradients; also returns d(loss)/d(input) for chaining
// the embedding network into the color network.
template <typename T>
inline MlpGrads<T> mlp_backward(const Mlp<T>& m, const ForwardCache<T>& cache,
                                const Matrix<T>& dout,
                                std::type_identity_t<Matrix<T>>* dinput) {
    if (dout.cols() != m.output_dim || dout.rows() != cache.input.rows())
        throw ShapeMismatch("mlp_backward: gradient shape");
    MlpGrads<T> g;
    g.weights.resize(m.num_layers());
    g.biases.resize(m.num_layers());

    Matrix<T> dskip_input = Matrix<T>::Zero(cache.input.rows(), m.input_dim);
    Matrix<T> delta = dout;  // gradient w.r.t. current layer's linear output

    for (int l = m.depth; l >= 0; --l) {
        // input to layer l as seen in forward
        const Matrix<T>& below = (l == 0) ? cache.input : cache.activations[l - 1];
        const bool skipped = (l == m.skip_layer && m.skip_layer > 0);
        if (skipped) {
            Matrix<T> cat(below.rows(), below.cols() + cache.input.cols());
            cat << below, cache.input;
            g.weights[l] = cat.transpose() * delta;
        } else {
            g.weights[l] = below.transpose() * delta;
        }
        g.biases[l] = delta.colwise().sum();

        Matrix<T> dbelow = delta * m.weights[l].transpose();
        if (skipped) {
            dskip_input += dbelow.rightCols(m.input_dim);
            dbelow = dbelow.leftCols(dbelow.cols() - m.input_dim).eval();
        }
        if (l == 0) {
            if (dinput) *dinput = dbelow + dskip_input;
            break;
        }
        // ReLU mask of layer l-1
        delta = dbelow.cwiseProduct(
            (cache.activations[l - 1].array() > T(0)).template cast<T>().matrix());
    }
    return g;
}

template <typename T>
struct AdamState {
    std::vector<Matrix<T>> m_w, v_w;
    std::vector<RowVector<T>> m_b, v_b;
    long long step_count = 0;
    double lr = 5e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(const Mlp<T>& net, double lr = 5e-4) {
        AdamState s;
        s.lr = lr;
        s.m_w.resize(net.num_layers());
        s.v_w.resize(net.num_layers());
        s.m_b.resize(net.num_layers());
        s.v_b.resize(net.num_layers());
        for (int l = 0; l < net.num_layers(); ++l) {
            s.m_w[l] = Matrix<T>::Zero(net.layer_input_dim(l), net.layer_output_dim(l));
            s.v_w[l] = s.m_w[l];
            s.m_b[l] = RowVector<T>::Zero(net.layer_output_dim(l));
            s.v_b[l] = s.m_b[l];
        }
        return s;
    }
};

template <typename T>
inline void adam_step(Mlp<T>& params, const MlpGrads<T>& grads, AdamState<T>& state) {
    if (grads.weights.size() != params.weights.size())
        throw ShapeMismatch("adam_step: gradient layer count");
    state.step_count += 1;
    const T b1 = T(state.beta1), b2 = T(state.beta2);
    const T c1 = T(1.0 - std::pow(state.beta1, double(state.step_count)));
    const T c2 = T(1.0 - std::pow(state.beta2, double(state.step_count)));
    const T lr = T(state.lr), eps = T(state.eps);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (grads.weights[l].rows() != params.weights[l].rows() ||
            grads.weights[l].cols() != params.weights[l].cols())
            throw ShapeMismatch("adam_step: weight gradient shape");
        state.m_w[l] = b1 * state.m_w[l] + (T(1) - b1) * grads.weights[l];
        state.v_w[l] = b2 * state.v_w[l] +
                       (T(1) - b2) * grads.weights[l].cwiseProduct(grads.weights[l]);
        params.weights[l].array() -=
            lr * (state.m_w[l].array() / c1) /
            ((state.v_w[l].array() / c2).sqrt() + eps);

        state.m_b[l] = b1 * state.m_b[l] + (T(1) - b1) * grads.biases[l];
        state.v_b[l] = b2 * state.v_b[l] +
                       (T(1) - b2) * grads.biases[l].cwiseProduct(grads.biases[l]);
        params.biases[l].array() -=
            lr * (state.m_b[l].array() / c1) /
            ((state.v_b[l].array() / c2).sqrt() + eps);
    }
}

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename T>
inline double clip_gradients(MlpGrads<T>& g, double max_norm) {
    double sq = 0;
    for (const auto& w : g.weights) sq += double(w.squaredNorm());
    for (const auto& b : g.biases) sq += double(b.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const T s = T(max_norm / norm);
        for (auto& w : g.weights) w *= s;
        for (auto& b : g.biases) b *= s;
    }
    return norm;
}

}  // namespace nlf
