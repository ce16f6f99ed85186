#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "nlf/common.hpp"
#include "nlf/encoding.hpp"
#include "nlf/metrics.hpp"
#include "nlf/model.hpp"
#include "nlf/scenes.hpp"
#include "nlf/serialize.hpp"

namespace nlf {

struct TrainConfig {
    int batch_size = 1024;
    long long total_iters = 20000;
    long long ease_iters = 8000;  // windowed-PE ramp length
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    double grad_clip = 10.0;
    std::uint64_t seed = 0;
    long long eval_every = 0;        // 0 disables periodic eval
    long long checkpoint_every = 0;  // 0 disables periodic checkpoints
    bool permutation_mode = false;   // sample without replacement per call
};

struct PixelRef {
    int view = 0, x = 0, y = 0;
};

// Flat list of training pixels, fixed at construction so batches are
// reproducible from the sampler stream alone.
struct TrainPixels {
    std::vector<PixelRef> refs;

    static TrainPixels from(const LightFieldDataset& ds) {
        TrainPixels p;
        for (int i = 0; i < int(ds.views.size()); ++i) {
            if (ds.views[i].holdout) continue;
            for (int y = 0; y < ds.image_height(); ++y)
                for (int x = 0; x < ds.image_width(); ++x) p.refs.push_back({i, x, y});
        }
        return p;
    }
};

struct RayBatch {
    std::vector<Ray> rays;
    std::vector<Rgb> targets;
};

inline RayBatch sample_batch(const LightFieldDataset& ds, const TrainPixels& pixels,
                             Rng& rng, int batch_size, bool permutation_mode = false) {
    const std::size_t n = pixels.refs.size();
    if (n == 0) throw EmptyDataset();
    RayBatch batch;
    batch.rays.reserve(batch_size);
    batch.targets.reserve(batch_size);

    std::vector<std::size_t> order;
    if (permutation_mode) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t(0));
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }
    for (int b = 0; b < batch_size; ++b) {
        const std::size_t idx =
            permutation_mode ? order[std::size_t(b) % n] : rng.uniform_index(n);
        const PixelRef& p = pixels.refs[idx];
        batch.rays.push_back(ds.pixel_ray(p.view, p.x, p.y));
        batch.targets.push_back(ds.pixel_color(p.view, p.x, p.y));
    }
    return batch;
}

template <typename T>
struct TrainState {
    LightFieldModel<T> model;
    AdamState<T> adam_color;
    AdamState<T> adam_embedding;  // unused for kind none
    long long iteration = 0;
    Rng sampler{0};
    TrainConfig config;
};

template <typename T>
inline TrainState<T> make_train_state(const ModelSpec& spec, const TrainConfig& cfg) {
    TrainState<T> s;
    s.model = make_model<T>(spec, cfg.seed);
    s.adam_color = AdamState<T>::init(s.model.color_net, cfg.lr_start);
    if (s.model.kind != EmbeddingKind::none)
        s.adam_embedding = AdamState<T>::init(s.model.embedding_net, cfg.lr_start);
    s.sampler = Rng::stream(cfg.seed, "batch_sampling");
    s.config = cfg;
    return s;
}

inline double lr_at(const TrainConfig& cfg, long long iteration) {
    const double frac =
        cfg.total_iters > 0 ? double(iteration) / double(cfg.total_iters) : 0.0;
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, std::min(frac, 1.0));
}

// One optimization step: MSE over composited batch colors, exact gradients
// through both networks, joint global-norm clipping, Adam on each network.
template <typename T>
inline double train_step(TrainState<T>& state, const RayBatch& batch) {
    auto& model = state.model;
    const double progress_ray =
        progress_at(state.iteration, state.config.ease_iters, model.pe_ray.num_bands);
    const double progress_latent =
        progress_at(state.iteration, state.config.ease_iters, model.pe_latent.num_bands);
    model.pe_ray.progress = progress_ray;
    model.pe_latent.progress = progress_latent;

    ModelCache<T> cache = prepare_batch(model, batch.rays, /*training=*/true);
    model_forward_samples(model, cache);

    const int B = int(batch.rays.size());
    Matrix<T> d_rgb(B, 3);
    double loss = 0;
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < 3; ++k) {
            const double diff = double(cache.rgb(b, k)) - batch.targets[std::size_t(b)][k];
            loss += diff * diff;
            d_rgb(b, k) = T(2.0 * diff / (3.0 * B));
        }
    loss /= 3.0 * B;
    if (!std::isfinite(loss))
        throw NonFiniteLoss("loss " + std::to_string(loss) + " at iteration " +
                            std::to_string(state.iteration) + " (" +
                            std::to_string(cache.sample_count) + " samples)");

    ModelGrads<T> grads = model_backward(model, cache, d_rgb);

    // joint global-norm clip across both networks
    double sq = 0;
    for (const auto& w : grads.color.weights) sq += double(w.squaredNorm());
    for (const auto& b : grads.color.biases) sq += double(b.squaredNorm());
    if (model.kind != EmbeddingKind::none) {
        for (const auto& w : grads.embedding.weights) sq += double(w.squaredNorm());
        for (const auto& b : grads.embedding.biases) sq += double(b.squaredNorm());
    }
    const double norm = std::sqrt(sq);
    if (norm > state.config.grad_clip && norm > 0) {
        const T s = T(state.config.grad_clip / norm);
        for (auto& w : grads.color.weights) w *= s;
        for (auto& b : grads.color.biases) b *= s;
        for (auto& w : grads.embedding.weights) w *= s;
        for (auto& b : grads.embedding.biases) b *= s;
    }

    const double lr = lr_at(state.config, state.iteration);
    state.adam_color.lr = lr;
    adam_step(model.color_net, grads.color, state.adam_color);
    if (model.kind != EmbeddingKind::none) {
        state.adam_embedding.lr = lr;
        adam_step(model.embedding_net, grads.embedding, state.adam_embedding);
    }
    state.iteration += 1;
    return loss;
}

// Renders every view of the requested split and reports per-view/mean metrics.
template <typename T>
inline MetricsReport evaluate(const LightFieldModel<T>& model,
                              const LightFieldDataset& ds, bool holdout = true,
                              RenderStats* stats = nullptr) {
    const auto idx = ds.split_indices(holdout);
    if (idx.empty()) throw EmptySplit();
    MetricsReport report;
    for (int i : idx) {
        const Image rendered = render_image(model, ds.views[std::size_t(i)].camera, stats);
        report.view_indices.push_back(i);
        report.view_psnr.push_back(psnr(rendered, ds.images[std::size_t(i)]));
        report.view_ssim.push_back(ssim(rendered, ds.images[std::size_t(i)]));
    }
    report.mean_psnr =
        std::accumulate(report.view_psnr.begin(), report.view_psnr.end(), 0.0) /
        double(report.view_psnr.size());
    report.mean_ssim =
        std::accumulate(report.view_ssim.begin(), report.view_ssim.end(), 0.0) /
        double(report.view_ssim.size());
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, model block, optimizer blocks, iteration,
// sampler state, trailing CRC32 over everything before it.

inline constexpr char kCheckpointMagic[8] = {'N', 'L', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const TrainState<float>& state) {
    BinWriter w;
    w.raw(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    write_model(w, state.model);
    write_adam(w, state.adam_color);
    w.u32(state.model.kind != EmbeddingKind::none ? 1 : 0);
    if (state.model.kind != EmbeddingKind::none) write_adam(w, state.adam_embedding);
    w.i64(state.iteration);
    w.u64(state.sampler.state());
    w.i64(state.config.total_iters);
    w.i64(state.config.ease_iters);
    w.u32(std::uint32_t(state.config.batch_size));
    w.f64(state.config.lr_start);
    w.f64(state.config.lr_end);
    w.f64(state.config.grad_clip);
    w.u64(state.config.seed);

    const auto& buf = w.buffer();
    const std::uint32_t crc = crc32(buf.data(), buf.size());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(buf.data(), std::streamsize(buf.size()));
    f.write(reinterpret_cast<const char*>(&crc), 4);
    if (!f) throw IoError("write failed: " + path);
}

inline TrainState<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw CorruptCheckpoint("file too short");
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if (crc32(buf.data(), buf.size() - 4) != stored)
        throw CorruptCheckpoint("checksum mismatch in " + path);

    BinReader r(buf.data(), buf.size() - 4);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw MalformedHeader("not a checkpoint: " + path);
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(version));

    TrainState<float> s;
    s.model = read_model(r);
    s.adam_color = read_adam(r);
    if (r.u32() != 0) s.adam_embedding = read_adam(r);
    s.iteration = r.i64();
    s.sampler = Rng(r.u64());
    s.config.total_iters = r.i64();
    s.config.ease_iters = r.i64();
    s.config.batch_size = int(r.u32());
    s.config.lr_start = r.f64();
    s.config.lr_end = r.f64();
    s.config.grad_clip = r.f64();
    s.config.seed = r.u64();
    return s;
}

// Line-oriented metrics log: one row per reporting interval.
inline void log_line(std::ostream& os, long long iteration, double loss, double psnr_db,
                     double pe_progress, double evals_per_ray) {
    os << "iter " << iteration << " loss " << loss << " psnr " << psnr_db
       << " pe_progress " << pe_progress << " evals_per_ray " << evals_per_ray << "\n";
}

// Full training loop used by the CLI and the acceptance runs; returns the
// per-iteration loss trace.
template <typename T>
inline std::vector<double> run_training(TrainState<T>& state, const LightFieldDataset& ds,
                                        std::ostream* log = nullptr,
                                        const std::string& checkpoint_path = {}) {
    const TrainPixels pixels = TrainPixels::from(ds);
    std::vector<double> trace;
    trace.reserve(std::size_t(state.config.total_iters));
    while (state.iteration < state.config.total_iters) {
        RayBatch batch = sample_batch(ds, pixels, state.sampler, state.config.batch_size,
                                      state.config.permutation_mode);
        const double loss = train_step(state, batch);
        trace.push_back(loss);
        const long long it = state.iteration;
        if (log && (it % 500 == 0 || it == state.config.total_iters)) {
            log_line(*log, it, loss, 10.0 * std::log10(1.0 / std::max(loss, 1e-12)),
                     state.model.pe_ray.progress, state.model.subdivided ? -1.0 : 1.0);
        }
        if constexpr (std::is_same_v<T, float>) {
            if (!checkpoint_path.empty() && state.config.checkpoint_every > 0 &&
                it % state.config.checkpoint_every == 0)
                save_checkpoint(checkpoint_path, state);
        }
    }
    return trace;
}

}  // namespace nlf
