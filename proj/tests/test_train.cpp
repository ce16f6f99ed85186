#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "nlf/dataset_io.hpp"
#include "nlf/train.hpp"

using namespace nlf;

namespace {

AnalyticScene checker_scene() {
    AnalyticScene scene;
    SceneRect rect;
    rect.z = 0.0;
    rect.s_min = rect.t_min = -4;
    rect.s_max = rect.t_max = 4;
    rect.texture.kind = Texture::Kind::checker;
    rect.texture.scale = 2.0;
    rect.texture.color_a = {0.9, 0.3, 0.1};
    rect.texture.color_b = {0.1, 0.4, 0.8};
    scene.rects.push_back(rect);
    return scene;
}

// One view whose pixel (x, y) has the unique color ((y*w + x) / n, 0, 0).
LightFieldDataset coded_dataset(int w, int h) {
    LightFieldDataset ds;
    ds.grid_rows = ds.grid_cols = 1;
    ds.param = {-1.0, 0.0};
    ds.holdout_every = 0;
    DatasetView view;
    view.camera.position = {0, 0, -1};
    view.camera.param = ds.param;
    view.camera.width = w;
    view.camera.height = h;
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(x, y) = {double(y * w + x) / (w * h), 0, 0};
    ds.views.push_back(view);
    ds.images.push_back(std::move(img));
    return ds;
}

ModelSpec tiny_spec(EmbeddingKind kind = EmbeddingKind::none) {
    ModelSpec spec;
    spec.kind = kind;
    spec.width = 32;
    spec.depth = 2;
    spec.skip_layer = 0;
    spec.latent_dim = 8;
    spec.pe_ray = {4, true, 4};
    spec.pe_latent = {3, true, 3};
    spec.pe_voxel = {2, true, 2};
    return spec;
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "nlf_test_train";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("sample_batch") {
    const auto ds = coded_dataset(4, 4);
    const TrainPixels pixels = TrainPixels::from(ds);
    REQUIRE(pixels.refs.size() == 16);

    SECTION("permutation mode visits every pixel exactly once") {
        Rng rng(3);
        const auto batch = sample_batch(ds, pixels, rng, 16, /*permutation_mode=*/true);
        std::map<long, int> counts;
        for (const auto& t : batch.targets) counts[std::lround(t.r * 16)] += 1;
        REQUIRE(counts.size() == 16);
        for (const auto& [pixel, count] : counts) CHECK(count == 1);
    }

    SECTION("same seed, same batch") {
        Rng a(9), b(9);
        const auto ba = sample_batch(ds, pixels, a, 32);
        const auto bb = sample_batch(ds, pixels, b, 32);
        for (int i = 0; i < 32; ++i) {
            CHECK(ba.targets[std::size_t(i)].r == bb.targets[std::size_t(i)].r);
            CHECK((ba.rays[std::size_t(i)].origin - bb.rays[std::size_t(i)].origin).norm() == 0.0);
        }
    }

    SECTION("with-replacement frequencies are uniform") {
        Rng rng(4);
        std::map<long, int> counts;
        const int draws = 16000;
        const auto batch = sample_batch(ds, pixels, rng, draws);
        for (const auto& t : batch.targets) counts[std::lround(t.r * 16)] += 1;
        const double expected = draws / 16.0;
        const double sigma = std::sqrt(expected * 15.0 / 16.0);
        for (const auto& [pixel, count] : counts)
            CHECK(std::abs(count - expected) < 5 * sigma);
    }

    SECTION("holdout pixels never sampled") {
        auto grid = generate_grid_dataset(checker_scene(), 3, 3, 4, 4, {-1.0, 0.0}, 2);
        const TrainPixels p = TrainPixels::from(grid);
        CHECK(p.refs.size() == 5 * 16);
        for (const auto& ref : p.refs) CHECK_FALSE(grid.views[std::size_t(ref.view)].holdout);
    }

    SECTION("empty dataset throws") {
        LightFieldDataset empty;
        TrainPixels none;
        Rng rng(1);
        CHECK_THROWS_AS(sample_batch(empty, none, rng, 4), EmptyDataset);
    }
}

TEST_CASE("train_step") {
    const auto ds = coded_dataset(4, 4);
    const TrainPixels pixels = TrainPixels::from(ds);

    SECTION("loss is finite and non-negative") {
        TrainConfig cfg;
        cfg.batch_size = 16;
        cfg.seed = 5;
        auto state = make_train_state<float>(tiny_spec(), cfg);
        const auto batch = sample_batch(ds, pixels, state.sampler, cfg.batch_size);
        const double loss = train_step(state, batch);
        CHECK(loss >= 0.0);
        CHECK(std::isfinite(loss));
        CHECK(state.iteration == 1);
    }

    SECTION("zero learning rate leaves parameters untouched") {
        TrainConfig cfg;
        cfg.batch_size = 16;
        cfg.seed = 5;
        cfg.lr_start = cfg.lr_end = 0.0;
        auto state = make_train_state<float>(tiny_spec(EmbeddingKind::feature), cfg);
        const auto before_c = state.model.color_net.weights;
        const auto before_e = state.model.embedding_net.weights;
        const auto batch = sample_batch(ds, pixels, state.sampler, cfg.batch_size);
        train_step(state, batch);
        for (std::size_t l = 0; l < before_c.size(); ++l)
            CHECK((state.model.color_net.weights[l].array() == before_c[l].array()).all());
        for (std::size_t l = 0; l < before_e.size(); ++l)
            CHECK((state.model.embedding_net.weights[l].array() == before_e[l].array()).all());
    }

    SECTION("memorizes a single view") {
        TrainConfig cfg;
        cfg.batch_size = 16;
        cfg.total_iters = 1500;
        cfg.ease_iters = 100;
        cfg.lr_start = 1e-2;
        cfg.lr_end = 1e-3;
        cfg.seed = 7;
        auto state = make_train_state<float>(tiny_spec(), cfg);
        const auto trace = run_training(state, ds);
        REQUIRE(trace.size() == 1500);
        CHECK(trace.back() < 1e-4);
    }
}

TEST_CASE("single-voxel grid reduces to alpha blending") {
    ModelSpec spec = tiny_spec();
    VoxelGrid grid;
    grid.resolution = 1;
    grid.box_min = {-2, -2, -0.5};
    grid.box_max = {2, 2, 0.5};
    spec.subdivision = grid;
    spec.background = {0.2, 0.4, 0.6};
    auto model = make_model<float>(spec, 77);

    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
        const Vec3 a{rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), -1.0};
        const Vec3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0};
        const Ray ray = make_ray(a, b - a);
        const auto hits = voxels_intersected(model.grid, ray);
        REQUIRE(hits.size() == 1);
        const VoxelSample s = lf_forward_local(model, localize(model.grid, 0, ray));
        const Rgb direct = render_ray(model, ray);
        for (int k = 0; k < 3; ++k)
            CHECK(direct[k] ==
                  Catch::Approx(s.color[k] * s.alpha + spec.background[k] * (1 - s.alpha))
                      .epsilon(1e-6));
    }
}

TEST_CASE("evaluate") {
    const auto ds = generate_grid_dataset(checker_scene(), 3, 3, 12, 12, {-1.0, 0.0}, 2);
    auto model = make_model<float>(tiny_spec(), 13);
    model.param = ds.param;

    SECTION("reports the holdout views deterministically") {
        const auto a = evaluate(model, ds, true);
        const auto b = evaluate(model, ds, true);
        CHECK(a.view_indices == ds.split_indices(true));
        CHECK(a.mean_psnr == b.mean_psnr);
        CHECK(a.mean_ssim == b.mean_ssim);
        CHECK(a.view_psnr.size() == 4);
    }

    SECTION("train split works too") {
        const auto r = evaluate(model, ds, false);
        CHECK(r.view_psnr.size() == 5);
    }

    SECTION("empty split throws") {
        const auto solid = generate_grid_dataset(checker_scene(), 2, 2, 12, 12, {-1.0, 0.0}, 0);
        CHECK_THROWS_AS(evaluate(model, solid, true), EmptySplit);
    }
}

TEST_CASE("checkpointing") {
    const auto ds = coded_dataset(4, 4);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.total_iters = 20;
    cfg.ease_iters = 10;
    cfg.seed = 99;

    SECTION("save, load, save is byte-identical") {
        auto state = make_train_state<float>(tiny_spec(EmbeddingKind::affine), cfg);
        run_training(state, ds);
        const auto p1 = temp_file("a.ckpt"), p2 = temp_file("b.ckpt");
        save_checkpoint(p1.string(), state);
        auto loaded = load_checkpoint(p1.string());
        save_checkpoint(p2.string(), loaded);
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        const std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
        const std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
        REQUIRE(b1 == b2);
    }

    SECTION("resume matches an uninterrupted run bitwise") {
        auto straight = make_train_state<float>(tiny_spec(EmbeddingKind::feature), cfg);
        run_training(straight, ds);

        // stop after 10 steps without touching the lr schedule
        auto first = make_train_state<float>(tiny_spec(EmbeddingKind::feature), cfg);
        const TrainPixels pixels = TrainPixels::from(ds);
        for (int i = 0; i < 10; ++i)
            train_step(first, sample_batch(ds, pixels, first.sampler, cfg.batch_size));
        const auto ckpt = temp_file("resume.ckpt");
        save_checkpoint(ckpt.string(), first);

        auto resumed = load_checkpoint(ckpt.string());
        CHECK(resumed.iteration == 10);
        run_training(resumed, ds);

        for (std::size_t l = 0; l < straight.model.color_net.weights.size(); ++l)
            CHECK((resumed.model.color_net.weights[l].array() ==
                   straight.model.color_net.weights[l].array())
                      .all());
        for (std::size_t l = 0; l < straight.model.embedding_net.weights.size(); ++l)
            CHECK((resumed.model.embedding_net.weights[l].array() ==
                   straight.model.embedding_net.weights[l].array())
                      .all());
        CHECK(resumed.sampler.state() == straight.sampler.state());
    }

    SECTION("corruption and truncation are detected") {
        auto state = make_train_state<float>(tiny_spec(), cfg);
        const auto path = temp_file("corrupt.ckpt");
        save_checkpoint(path.string(), state);

        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();

        // truncated
        const auto tpath = temp_file("trunc.ckpt");
        std::ofstream(tpath, std::ios::binary)
            .write(bytes.data(), std::streamsize(bytes.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(tpath.string()), CorruptCheckpoint);

        // flipped payload byte
        auto flipped = bytes;
        flipped[flipped.size() / 2] ^= 0x40;
        const auto fpath = temp_file("flip.ckpt");
        std::ofstream(fpath, std::ios::binary)
            .write(flipped.data(), std::streamsize(flipped.size()));
        CHECK_THROWS_AS(load_checkpoint(fpath.string()), CorruptCheckpoint);

        // bad magic with a recomputed checksum
        auto bad = bytes;
        bad[0] = 'X';
        const std::uint32_t crc = crc32(bad.data(), bad.size() - 4);
        std::memcpy(bad.data() + bad.size() - 4, &crc, 4);
        const auto mpath = temp_file("magic.ckpt");
        std::ofstream(mpath, std::ios::binary)
            .write(bad.data(), std::streamsize(bad.size()));
        CHECK_THROWS_AS(load_checkpoint(mpath.string()), MalformedHeader);
    }
}

TEST_CASE("lr schedule") {
    TrainConfig cfg;
    cfg.lr_start = 5e-4;
    cfg.lr_end = 5e-5;
    cfg.total_iters = 1000;
    CHECK(lr_at(cfg, 0) == Catch::Approx(5e-4));
    CHECK(lr_at(cfg, 1000) == Catch::Approx(5e-5));
    CHECK(lr_at(cfg, 2000) == Catch::Approx(5e-5));  // clamped past the end
    CHECK(lr_at(cfg, 500) == Catch::Approx(std::sqrt(5e-4 * 5e-5)));
    for (int i = 1; i <= 1000; ++i) CHECK(lr_at(cfg, i) < lr_at(cfg, i - 1));
}
