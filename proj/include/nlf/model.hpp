#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "nlf/common.hpp"
#include "nlf/encoding.hpp"
#include "nlf/geometry.hpp"
#include "nlf/image.hpp"
#include "nlf/net.hpp"
#include "nlf/serialize.hpp"

namespace nlf {

enum class EmbeddingKind : std::uint32_t { none = 0, feature = 1, affine = 2 };
enum class RaySpace : std::uint32_t { two_plane = 0, pluecker = 1 };

constexpr double kEmbeddingNormFloor = 1e-8;

// Neural light field: color network F plus optional embedding network E,
// optionally subdivided into a voxel grid of local light fields sharing both
// networks, conditioned on encoded voxel centers.
template <typename T>
struct LightFieldModel {
    EmbeddingKind kind = EmbeddingKind::none;
    RaySpace ray_space = RaySpace::two_plane;
    int latent_dim = 32;  // N

    PosEncConfig pe_ray;     // ray coords (kind none)
    PosEncConfig pe_latent;  // embedded vector (feature / affine)
    PosEncConfig pe_voxel;   // voxel center channel (subdivided only)

    bool subdivided = false;
    VoxelGrid grid;
    Rgb background{0, 0, 0};
    TwoPlaneParam param;  // global parameterization for render_ray

    Mlp<T> color_net;      // F
    Mlp<T> embedding_net;  // E (absent for kind none)

    int ray_dim() const { return ray_space == RaySpace::pluecker ? 6 : 4; }
    int voxel_feat_dim() const { return subdivided ? pe_voxel.encoded_dim(3) : 0; }
    int color_out_dim() const { return subdivided ? 4 : 3; }

    int embedding_in_dim() const { return ray_dim() + voxel_feat_dim(); }
    int embedding_out_dim() const {
        return kind == EmbeddingKind::affine ? latent_dim * (ray_dim() + 1) : latent_dim;
    }
    int color_in_dim() const {
        const int core = kind == EmbeddingKind::none ? pe_ray.encoded_dim(ray_dim())
                                                     : pe_latent.encoded_dim(latent_dim);
        return core + voxel_feat_dim();
    }
};

struct ModelSpec {
    EmbeddingKind kind = EmbeddingKind::none;
    RaySpace ray_space = RaySpace::two_plane;
    int latent_dim = 32;
    int width = 256;
    int depth = 8;
    int skip_layer = 4;
    PosEncConfig pe_ray{10, true, 10};
    PosEncConfig pe_latent{10, true, 10};
    PosEncConfig pe_voxel{8, true, 8};
    std::optional<VoxelGrid> subdivision;
    TwoPlaneParam param;
    Rgb background{0, 0, 0};
};

template <typename T>
inline LightFieldModel<T> make_model(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.latent_dim < 1) throw ShapeMismatch("latent_dim must be >= 1");
    if (spec.ray_space == RaySpace::pluecker && spec.kind == EmbeddingKind::affine)
        throw ShapeMismatch("affine embedding is not defined for Pluecker ray space");
    if (spec.ray_space == RaySpace::pluecker && spec.subdivision)
        throw ShapeMismatch("subdivision uses local two-plane coordinates");
    LightFieldModel<T> m;
    m.kind = spec.kind;
    m.ray_space = spec.ray_space;
    m.latent_dim = spec.latent_dim;
    m.pe_ray = spec.pe_ray;
    m.pe_latent = spec.pe_latent;
    m.pe_voxel = spec.pe_voxel;
    m.param = spec.param;
    m.background = spec.background;
    if (spec.subdivision) {
        m.subdivided = true;
        m.grid = *spec.subdivision;
    }
    Rng rng = Rng::stream(seed, "model_init");
    if (m.kind != EmbeddingKind::none)
        m.embedding_net = mlp_init<T>(m.embedding_in_dim(), m.embedding_out_dim(),
                                      spec.width, spec.depth, spec.skip_layer, rng);
    m.color_net = mlp_init<T>(m.color_in_dim(), m.color_out_dim(), spec.width,
                              spec.depth, spec.skip_layer, rng);
    return m;
}

template <typename T>
inline T sigmoid(T x) {
    return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// ---------------------------------------------------------------------------
// Batched forward / backward through the full model. One sample = one
// (ray, voxel) pair in the subdivided case, one ray otherwise.

template <typename T>
struct ModelCache {
    bool training = false;
    int sample_count = 0;
    // per-ray sample ranges [offset[b], offset[b+1]) into the sample arrays
    std::vector<int> offsets;

    Matrix<T> raw_r;   // S x ray_dim, local (or global) ray coords
    Matrix<T> gfeat;   // S x voxel_feat_dim (encoded voxel centers)
    std::vector<double> entry_t;

    ForwardCache<T> e_cache;
    Matrix<T> e_out;
    std::vector<T> norms;  // pre-normalization norm per sample
    Matrix<T> latent;      // S x N, post-transform
    ForwardCache<T> f_cache;
    Matrix<T> rgba;  // S x (3|4), post-sigmoid
    Matrix<T> rgb;   // B x 3, composited
};

namespace detail {

template <typename T>
inline void feature_normalize_rows(const LightFieldModel<T>& model, const Matrix<T>& u,
                                   bool training, Matrix<T>& out, std::vector<T>& norms) {
    const T scale = T(std::sqrt(double(model.latent_dim)));
    out.resize(u.rows(), u.cols());
    norms.resize(u.rows());
    for (Eigen::Index s = 0; s < u.rows(); ++s) {
        const T n = u.row(s).norm();
        if (!training && n < T(kEmbeddingNormFloor))
            throw DegenerateEmbedding("feature norm " + std::to_string(double(n)));
        norms[std::size_t(s)] = n;
        out.row(s) = u.row(s) * (scale / (n + T(kEmbeddingNormFloor)));
    }
}

// Applies the affine head: A (first N*R entries, row-major, Frobenius
// normalized to sqrt(N*R)) and b (last N entries through tanh); latent = A r + b.
template <typename T>
inline void affine_apply_rows(const LightFieldModel<T>& model, const Matrix<T>& e_out,
                              const Matrix<T>& raw_r, bool training, Matrix<T>& latent,
                              std::vector<T>& norms) {
    const int N = model.latent_dim, R = model.ray_dim();
    const T scale = T(std::sqrt(double(N * R)));
    latent.resize(e_out.rows(), N);
    norms.resize(e_out.rows());
    for (Eigen::Index s = 0; s < e_out.rows(); ++s) {
        Eigen::Map<const Matrix<T>> a_hat(e_out.row(s).data(), N, R);
        const T nf = a_hat.norm();
        if (!training && nf < T(kEmbeddingNormFloor))
            throw DegenerateEmbedding("affine Frobenius norm " + std::to_string(double(nf)));
        norms[std::size_t(s)] = nf;
        const T k = scale / (nf + T(kEmbeddingNormFloor));
        for (int i = 0; i < N; ++i) {
            T acc = std::tanh(e_out(s, N * R + i));  // bias through tanh
            for (int j = 0; j < R; ++j) acc += k * a_hat(i, j) * raw_r(s, j);
            latent(s, i) = acc;
        }
    }
}

}  // namespace detail

// Forward over prepared samples. `offsets` has B+1 entries; without
// subdivision it is the identity partition (one sample per ray).
template <typename T>
inline void model_forward_samples(const LightFieldModel<T>& model, ModelCache<T>& c) {
    const int S = int(c.raw_r.rows());
    c.sample_count = S;
    const int rd = model.ray_dim();
    const int gd = model.voxel_feat_dim();

    if (S == 0) {  // every ray missed the grid
        const int B = int(c.offsets.size()) - 1;
        c.rgb.resize(B, 3);
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < 3; ++k) c.rgb(b, k) = T(model.background[k]);
        return;
    }

    // embedding network
    if (model.kind != EmbeddingKind::none) {
        Matrix<T> e_in(S, rd + gd);
        e_in.leftCols(rd) = c.raw_r;
        if (gd > 0) e_in.rightCols(gd) = c.gfeat;
        c.e_out = mlp_forward(model.embedding_net, e_in, &c.e_cache);
        if (model.kind == EmbeddingKind::feature)
            detail::feature_normalize_rows(model, c.e_out, c.training, c.latent, c.norms);
        else
            detail::affine_apply_rows(model, c.e_out, c.raw_r, c.training, c.latent, c.norms);
    }

    // color network input: encoded coords then voxel features
    const PosEncConfig& pe =
        model.kind == EmbeddingKind::none ? model.pe_ray : model.pe_latent;
    const Matrix<T>& coords = model.kind == EmbeddingKind::none ? c.raw_r : c.latent;
    const auto ww = window_weights<T>(pe);
    const int enc_dim = pe.encoded_dim(int(coords.cols()));
    Matrix<T> f_in(S, enc_dim + gd);
    for (int s = 0; s < S; ++s)
        posenc_into(coords.row(s).data(), int(coords.cols()), pe, ww,
                    f_in.row(s).data());
    if (gd > 0) f_in.rightCols(gd) = c.gfeat;

    Matrix<T> logits = mlp_forward(model.color_net, f_in, &c.f_cache);
    c.rgba = logits.unaryExpr([](T x) { return sigmoid(x); });

    // composite per ray
    const int B = int(c.offsets.size()) - 1;
    c.rgb.resize(B, 3);
    if (!model.subdivided) {
        c.rgb = c.rgba.leftCols(3);
        return;
    }
    for (int b = 0; b < B; ++b) {
        T trans = T(1);
        T out[3] = {T(0), T(0), T(0)};
        for (int s = c.offsets[b]; s < c.offsets[b + 1]; ++s) {
            const T a = c.rgba(s, 3);
            for (int k = 0; k < 3; ++k) out[k] += trans * a * c.rgba(s, k);
            trans *= (T(1) - a);
        }
        for (int k = 0; k < 3; ++k)
            c.rgb(b, k) = out[k] + trans * T(model.background[k]);
    }
}

template <typename T>
struct ModelGrads {
    MlpGrads<T> color;
    MlpGrads<T> embedding;  // empty for kind none
};

// Pullback of d(loss)/d(rgb) through compositing, output sigmoids, the color
// network, positional encoding, the embedding transform, and the embedding
// network. Geometry inputs are treated as constants.
template <typename T>
inline ModelGrads<T> model_backward(const LightFieldModel<T>& model, const ModelCache<T>& c,
                                    const Matrix<T>& d_rgb) {
    const int S = c.sample_count;
    const int B = int(c.offsets.size()) - 1;
    const int out_dim = model.color_out_dim();

    // d(loss)/d(rgba) per sample
    Matrix<T> d_rgba = Matrix<T>::Zero(S, out_dim);
    if (!model.subdivided) {
        d_rgba.leftCols(3) = d_rgb;
    } else {
        for (int b = 0; b < B; ++b) {
            const int lo = c.offsets[b], hi = c.offsets[b + 1];
            const int m = hi - lo;
            // transmittance in front of each sample
            std::vector<T> trans(m + 1);
            trans[0] = T(1);
            for (int s = 0; s < m; ++s)
                trans[s + 1] = trans[s] * (T(1) - c.rgba(lo + s, 3));
            for (int s = 0; s < m; ++s) {
                const T a = c.rgba(lo + s, 3);
                for (int k = 0; k < 3; ++k)
                    d_rgba(lo + s, k) = d_rgb(b, k) * trans[s] * a;
            }
            // alpha gradients in O(m^2), avoiding division by (1 - alpha)
            for (int s = 0; s < m; ++s) {
                T acc = T(0);
                for (int k = 0; k < 3; ++k)
                    acc += d_rgb(b, k) * trans[s] * c.rgba(lo + s, k);
                for (int j = s + 1; j < m; ++j) {
                    T t = T(1);
                    for (int i = 0; i < j; ++i)
                        if (i != s) t *= (T(1) - c.rgba(lo + i, 3));
                    const T aj = c.rgba(lo + j, 3);
                    for (int k = 0; k < 3; ++k)
                        acc -= d_rgb(b, k) * t * aj * c.rgba(lo + j, k);
                }
                // background term
                T t = T(1);
                for (int i = 0; i < m; ++i)
                    if (i != s) t *= (T(1) - c.rgba(lo + i, 3));
                for (int k = 0; k < 3; ++k)
                    acc -= d_rgb(b, k) * t * T(model.background[k]);
                d_rgba(lo + s, 3) = acc;
            }
        }
    }

    // sigmoid backward
    Matrix<T> d_logits =
        d_rgba.cwiseProduct(c.rgba.cwiseProduct(Matrix<T>::Ones(S, out_dim) - c.rgba));

    ModelGrads<T> g;
    Matrix<T> d_f_in;
    g.color = mlp_backward(model.color_net, c.f_cache, d_logits, &d_f_in);
    if (model.kind == EmbeddingKind::none) return g;

    // positional-encoding backward into the latent coordinates
    const PosEncConfig& pe = model.pe_latent;
    const auto ww = window_weights<T>(pe);
    const int N = model.latent_dim;
    Matrix<T> d_latent = Matrix<T>::Zero(S, N);
    for (int s = 0; s < S; ++s)
        posenc_backward_into(c.latent.row(s).data(), N, pe, ww, d_f_in.row(s).data(),
                             d_latent.row(s).data());

    // embedding transform backward
    Matrix<T> d_e_out = Matrix<T>::Zero(S, model.embedding_out_dim());
    const T floor = T(kEmbeddingNormFloor);
    if (model.kind == EmbeddingKind::feature) {
        const T scale = T(std::sqrt(double(N)));
        for (int s = 0; s < S; ++s) {
            const T n = c.norms[std::size_t(s)];
            const T denom = n + floor;
            const T udot = c.e_out.row(s).dot(d_latent.row(s));
            d_e_out.row(s) =
                (scale / denom) * d_latent.row(s) -
                (scale * udot / (std::max(n, floor) * denom * denom)) * c.e_out.row(s);
        }
    } else {
        const int R = model.ray_dim();
        const T scale = T(std::sqrt(double(N * R)));
        for (int s = 0; s < S; ++s) {
            const T nf = c.norms[std::size_t(s)];
            const T denom = nf + floor;
            const T k = scale / denom;
            Eigen::Map<const Matrix<T>> a_hat(c.e_out.row(s).data(), N, R);
            // d(latent)/dA = d_latent (outer) r, with A = k * a_hat
            Matrix<T> d_A(N, R);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < R; ++j) d_A(i, j) = d_latent(s, i) * c.raw_r(s, j);
            const T fdot = (a_hat.cwiseProduct(d_A)).sum();
            Matrix<T> d_a_hat =
                k * d_A -
                (scale * fdot / (std::max(nf, floor) * denom * denom)) * a_hat;
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < R; ++j) d_e_out(s, i * R + j) = d_a_hat(i, j);
            for (int i = 0; i < N; ++i) {
                const T b = c.latent(s, i) -
                            k * a_hat.row(i).dot(c.raw_r.row(s).head(R));  // tanh(b_hat)
                d_e_out(s, N * R + i) = d_latent(s, i) * (T(1) - b * b);
            }
        }
    }

    g.embedding = mlp_backward(model.embedding_net, c.e_cache, d_e_out, nullptr);
    return g;
}

// ---------------------------------------------------------------------------
// Sample preparation

template <typename T>
inline void encode_voxel_feature(const LightFieldModel<T>& model, int voxel_index, T* out) {
    const Vec3 p = model.grid.voxel_center_normalized(voxel_index);
    const T v[3] = {T(p.x), T(p.y), T(p.z)};
    const auto ww = window_weights<T>(model.pe_voxel);
    posenc_into(v, 3, model.pe_voxel, ww, out);
}

template <typename T>
inline std::vector<T> ray_input_coords(const LightFieldModel<T>& model, const Ray& ray) {
    if (model.ray_space == RaySpace::pluecker) {
        const auto pl = to_pluecker(ray);
        return {T(pl.direction.x), T(pl.direction.y), T(pl.direction.z),
                T(pl.moment.x), T(pl.moment.y), T(pl.moment.z)};
    }
    const auto rc = to_two_plane(ray, model.param);
    return {T(rc.x), T(rc.y), T(rc.u), T(rc.v)};
}

// Builds the flat sample list for a batch of rays. Without subdivision this
// is one sample per ray; with subdivision, one per traversed voxel (rays that
// miss the grid contribute an empty range and composite to the background).
template <typename T>
inline ModelCache<T> prepare_batch(const LightFieldModel<T>& model,
                                   const std::vector<Ray>& rays, bool training) {
    ModelCache<T> c;
    c.training = training;
    const int B = int(rays.size());
    const int rd = model.ray_dim();
    c.offsets.resize(B + 1, 0);

    if (!model.subdivided) {
        c.raw_r.resize(B, rd);
        for (int b = 0; b < B; ++b) {
            const auto v = ray_input_coords(model, rays[b]);
            for (int j = 0; j < rd; ++j) c.raw_r(b, j) = v[j];
            c.offsets[b + 1] = b + 1;
        }
        return c;
    }

    std::vector<LocalRayCoords> locals;
    for (int b = 0; b < B; ++b) {
        for (const auto& hit : voxels_intersected(model.grid, rays[b]))
            locals.push_back(localize(model.grid, hit.voxel_index, rays[b]));
        c.offsets[b + 1] = int(locals.size());
    }
    const int S = int(locals.size());
    const int gd = model.voxel_feat_dim();
    c.raw_r.resize(S, rd);
    c.gfeat.resize(S, gd);
    c.entry_t.resize(S);
    for (int s = 0; s < S; ++s) {
        const auto& l = locals[std::size_t(s)];
        c.raw_r(s, 0) = T(l.coords.x);
        c.raw_r(s, 1) = T(l.coords.y);
        c.raw_r(s, 2) = T(l.coords.u);
        c.raw_r(s, 3) = T(l.coords.v);
        encode_voxel_feature(model, l.voxel_index, c.gfeat.row(s).data());
        c.entry_t[std::size_t(s)] = l.entry_t;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Spec-surface single-ray operations

template <typename T>
inline std::vector<T> embed_feature(const LightFieldModel<T>& model, const RayCoords4D& r) {
    if (model.kind != EmbeddingKind::feature)
        throw ShapeMismatch("embed_feature: model kind is not feature");
    Matrix<T> in(1, 4);
    in << T(r.x), T(r.y), T(r.u), T(r.v);
    ForwardCache<T> cache;
    Matrix<T> u = mlp_forward(model.embedding_net, in, &cache);
    Matrix<T> out;
    std::vector<T> norms;
    detail::feature_normalize_rows(model, u, /*training=*/false, out, norms);
    return std::vector<T>(out.data(), out.data() + out.cols());
}

template <typename T>
struct AffineOutput {
    Matrix<T> A;  // N x 4, Frobenius-normalized
    std::vector<T> b;
};

template <typename T>
inline std::vector<T> embed_affine(const LightFieldModel<T>& model, const RayCoords4D& r,
                                   std::optional<int> voxel_index = std::nullopt,
                                   AffineOutput<T>* decoded = nullptr) {
    if (model.kind != EmbeddingKind::affine)
        throw ShapeMismatch("embed_affine: model kind is not affine");
    const int gd = model.voxel_feat_dim();
    Matrix<T> in(1, 4 + gd);
    in(0, 0) = T(r.x);
    in(0, 1) = T(r.y);
    in(0, 2) = T(r.u);
    in(0, 3) = T(r.v);
    if (gd > 0) {
        if (!voxel_index) throw ShapeMismatch("embed_affine: subdivided model needs a voxel index");
        encode_voxel_feature(model, *voxel_index, in.row(0).data() + 4);
    }
    ForwardCache<T> cache;
    Matrix<T> e_out = mlp_forward(model.embedding_net, in, &cache);
    Matrix<T> raw(1, 4);
    raw << T(r.x), T(r.y), T(r.u), T(r.v);
    Matrix<T> latent;
    std::vector<T> norms;
    detail::affine_apply_rows(model, e_out, raw, /*training=*/false, latent, norms);
    if (decoded) {
        const int N = model.latent_dim;
        Eigen::Map<const Matrix<T>> a_hat(e_out.row(0).data(), N, 4);
        decoded->A = a_hat * (T(std::sqrt(4.0 * N)) / (norms[0] + T(kEmbeddingNormFloor)));
        decoded->b.resize(N);
        for (int i = 0; i < N; ++i) decoded->b[std::size_t(i)] = std::tanh(e_out(0, 4 * N + i));
    }
    return std::vector<T>(latent.data(), latent.data() + latent.cols());
}

template <typename T>
inline Rgb lf_forward(const LightFieldModel<T>& model, const RayCoords4D& r) {
    if (model.subdivided) throw ShapeMismatch("lf_forward: model is subdivided");
    if (model.ray_space != RaySpace::two_plane)
        throw ShapeMismatch("lf_forward: expects two-plane coordinates");
    ModelCache<T> c;
    c.training = false;
    c.raw_r.resize(1, 4);
    c.raw_r << T(r.x), T(r.y), T(r.u), T(r.v);
    c.offsets = {0, 1};
    model_forward_samples(model, c);
    return {double(c.rgb(0, 0)), double(c.rgb(0, 1)), double(c.rgb(0, 2))};
}

struct VoxelSample {
    Rgb color;
    double alpha = 0;
    int voxel_index = 0;
    double entry_t = 0;
};

template <typename T>
inline VoxelSample lf_forward_local(const LightFieldModel<T>& model,
                                    const LocalRayCoords& lrc) {
    if (!model.subdivided) throw ShapeMismatch("lf_forward_local: model has no grid");
    ModelCache<T> c;
    c.training = false;
    c.raw_r.resize(1, 4);
    c.raw_r << T(lrc.coords.x), T(lrc.coords.y), T(lrc.coords.u), T(lrc.coords.v);
    c.gfeat.resize(1, model.voxel_feat_dim());
    encode_voxel_feature(model, lrc.voxel_index, c.gfeat.row(0).data());
    c.offsets = {0, 1};
    model_forward_samples(model, c);
    return {{double(c.rgba(0, 0)), double(c.rgba(0, 1)), double(c.rgba(0, 2))},
            double(c.rgba(0, 3)),
            lrc.voxel_index,
            lrc.entry_t};
}

// Front-to-back over operator; samples must already be sorted by entry_t.
inline Rgb composite(const std::vector<VoxelSample>& samples, const Rgb& background = {}) {
    double trans = 1.0;
    Rgb out;
    double prev_t = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        if (s.entry_t < prev_t) throw UnsortedSamples();
        prev_t = s.entry_t;
        out = out + s.color * (trans * s.alpha);
        trans *= (1.0 - s.alpha);
    }
    return out + background * trans;
}

// Per-sample compositing weights plus the trailing background weight.
inline std::vector<double> composite_weights(const std::vector<double>& alphas) {
    std::vector<double> w(alphas.size() + 1);
    double trans = 1.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        w[i] = trans * alphas[i];
        trans *= (1.0 - alphas[i]);
    }
    w.back() = trans;
    return w;
}

struct RenderStats {
    long long color_evals = 0;
    long long embedding_evals = 0;
    double seconds = 0;
};

template <typename T>
inline Rgb render_ray(const LightFieldModel<T>& model, const Ray& ray,
                      RenderStats* stats = nullptr) {
    std::vector<Ray> one{ray};
    ModelCache<T> c = prepare_batch(model, one, /*training=*/false);
    if (c.raw_r.rows() == 0) return model.background;  // missed the grid
    model_forward_samples(model, c);
    if (stats) {
        stats->color_evals += c.sample_count;
        if (model.kind != EmbeddingKind::none) stats->embedding_evals += c.sample_count;
    }
    return {double(c.rgb(0, 0)), double(c.rgb(0, 1)), double(c.rgb(0, 2))};
}

// A view in the camera-grid capture model: rays start at `position` on the
// camera plane and pass through pixel centers on the pi_uv window.
struct GridCamera {
    Vec3 position;
    TwoPlaneParam param;
    double u_min = -1, u_max = 1, v_min = -1, v_max = 1;
    int width = 0, height = 0;

    Ray pixel_ray(int x, int y) const {
        const double u = u_min + (x + 0.5) / width * (u_max - u_min);
        const double v = v_min + (y + 0.5) / height * (v_max - v_min);
        return make_ray(position, Vec3{u, v, param.z_uv} - position);
    }
};

template <typename T>
inline Image render_image(const LightFieldModel<T>& model, const GridCamera& camera,
                          RenderStats* stats = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    Image img(camera.width, camera.height);
    std::vector<Ray> rays;
    rays.reserve(std::size_t(camera.width));
    for (int y = 0; y < camera.height; ++y) {
        rays.clear();
        for (int x = 0; x < camera.width; ++x) rays.push_back(camera.pixel_ray(x, y));
        ModelCache<T> c = prepare_batch(model, rays, /*training=*/false);
        model_forward_samples(model, c);
        for (int x = 0; x < camera.width; ++x)
            img.at(x, y) = {double(c.rgb(x, 0)), double(c.rgb(x, 1)), double(c.rgb(x, 2))};
        if (stats) {
            stats->color_evals += c.sample_count;
            if (model.kind != EmbeddingKind::none) stats->embedding_evals += c.sample_count;
        }
    }
    if (stats)
        stats->seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return img;
}

// ---------------------------------------------------------------------------
// Model checkpoint block (header + both networks); shared by save/load in
// the training module.

inline constexpr std::uint32_t kModelBlockVersion = 1;

inline void write_pe(BinWriter& w, const PosEncConfig& pe) {
    w.u32(std::uint32_t(pe.num_bands));
    w.u32(pe.include_input ? 1 : 0);
    w.f64(pe.progress);
}

inline PosEncConfig read_pe(BinReader& r) {
    PosEncConfig pe;
    pe.num_bands = int(r.u32());
    pe.include_input = r.u32() != 0;
    pe.progress = r.f64();
    return pe;
}

inline void write_model(BinWriter& w, const LightFieldModel<float>& m) {
    w.u32(kModelBlockVersion);
    w.u32(std::uint32_t(m.kind));
    w.u32(std::uint32_t(m.ray_space));
    w.u32(std::uint32_t(m.latent_dim));
    write_pe(w, m.pe_ray);
    write_pe(w, m.pe_latent);
    write_pe(w, m.pe_voxel);
    w.u32(m.subdivided ? 1 : 0);
    w.u32(std::uint32_t(m.grid.resolution));
    for (int a = 0; a < 3; ++a) w.f64(m.grid.box_min[a]);
    for (int a = 0; a < 3; ++a) w.f64(m.grid.box_max[a]);
    for (int k = 0; k < 3; ++k) w.f64(m.background[k]);
    w.f64(m.param.z_xy);
    w.f64(m.param.z_uv);
    w.u32(m.kind != EmbeddingKind::none ? 1 : 0);
    if (m.kind != EmbeddingKind::none) write_mlp(w, m.embedding_net);
    write_mlp(w, m.color_net);
}

inline LightFieldModel<float> read_model(BinReader& r) {
    const auto version = r.u32();
    if (version != kModelBlockVersion)
        throw VersionMismatch("model block version " + std::to_string(version));
    LightFieldModel<float> m;
    m.kind = EmbeddingKind(r.u32());
    m.ray_space = RaySpace(r.u32());
    m.latent_dim = int(r.u32());
    m.pe_ray = read_pe(r);
    m.pe_latent = read_pe(r);
    m.pe_voxel = read_pe(r);
    m.subdivided = r.u32() != 0;
    m.grid.resolution = int(r.u32());
    m.grid.box_min = {r.f64(), r.f64(), r.f64()};
    m.grid.box_max = {r.f64(), r.f64(), r.f64()};
    for (int k = 0; k < 3; ++k) m.background[k] = r.f64();
    m.param.z_xy = r.f64();
    m.param.z_uv = r.f64();
    if (r.u32() != 0) m.embedding_net = read_mlp(r);
    m.color_net = read_mlp(r);
    return m;
}

}  // namespace nlf
