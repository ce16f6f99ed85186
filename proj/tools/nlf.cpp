// Command-line front end: dataset generation, training, rendering,
// evaluation, EPI slices, and embedding visualization.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "nlf/dataset_io.hpp"
#include "nlf/metrics.hpp"
#include "nlf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nlf;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// Record of everything a command wrote, saved as files.json in the run dir.
struct RunOutputs {
    fs::path dir;
    std::vector<std::string> files;

    explicit RunOutputs(const fs::path& d) : dir(d) { fs::create_directories(dir); }
    fs::path path(const std::string& name) {
        files.push_back(name);
        return dir / name;
    }
    void finish() {
        std::ofstream f(dir / "files.json");
        f << json(files).dump(2) << "\n";
    }
};

AnalyticScene plane_scene() {
    AnalyticScene scene;
    SceneRect rect;
    rect.z = 0.0;
    rect.s_min = rect.t_min = -4;
    rect.s_max = rect.t_max = 4;
    rect.texture.kind = Texture::Kind::sine;
    rect.texture.scale = 3.0;
    rect.texture.angle = 0.5;
    rect.texture.color_a = {0.9, 0.6, 0.2};
    rect.texture.color_b = {0.1, 0.3, 0.8};
    scene.rects.push_back(rect);
    return scene;
}

AnalyticScene occluder_scene() {
    AnalyticScene scene;
    SceneRect front;
    front.z = 0.1;
    front.s_min = -0.9;
    front.s_max = 0.2;
    front.t_min = -0.6;
    front.t_max = 0.7;
    front.texture.kind = Texture::Kind::sine;
    front.texture.scale = 1.2;
    front.texture.angle = 2.0;
    front.texture.color_a = {0.95, 0.5, 0.15};
    front.texture.color_b = {0.2, 0.1, 0.4};
    SceneRect back;
    back.z = 0.5;
    back.s_min = back.t_min = -3;
    back.s_max = back.t_max = 3;
    back.texture.kind = Texture::Kind::checker;
    back.texture.scale = 0.75;
    back.texture.color_a = {0.15, 0.75, 0.55};
    back.texture.color_b = {0.85, 0.9, 0.3};
    scene.rects.push_back(front);
    scene.rects.push_back(back);
    return scene;
}

struct Recipe {
    AnalyticScene scene;
    double z_uv = 0.0;  // chart plane after reparameterization
};

Recipe recipe_by_name(const std::string& name) {
    if (name == "plane0") return {plane_scene(), 0.0};
    if (name == "plane1") return {plane_scene(), 1.0};
    if (name == "plane3") return {plane_scene(), 3.0};
    if (name == "two-plane-occluder") return {occluder_scene(), 0.0};
    throw CLI::ValidationError("--recipe", "unknown recipe: " + name);
}

EmbeddingKind kind_by_name(const std::string& name) {
    if (name == "none") return EmbeddingKind::none;
    if (name == "feature") return EmbeddingKind::feature;
    if (name == "affine") return EmbeddingKind::affine;
    throw CLI::ValidationError("--kind", "unknown embedding kind: " + name);
}

// Renders each camera in its own task; stats are reduced in view order so the
// result is independent of the worker count.
std::vector<Image> render_views(const LightFieldModel<float>& model,
                                const std::vector<GridCamera>& cameras, int workers,
                                RenderStats* total) {
    std::vector<Image> images(cameras.size());
    std::vector<RenderStats> stats(cameras.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < cameras.size(); ++i)
            images[i] = render_image(model, cameras[i], &stats[i]);
    } else {
        std::vector<std::future<void>> tasks;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            tasks.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next++; i < cameras.size(); i = next++)
                    images[i] = render_image(model, cameras[i], &stats[i]);
            }));
        for (auto& t : tasks) t.get();
    }
    if (total)
        for (const auto& s : stats) {
            total->color_evals += s.color_evals;
            total->embedding_evals += s.embedding_evals;
            total->seconds += s.seconds;
        }
    return images;
}

json report_to_json(const MetricsReport& r) {
    return {{"view_indices", r.view_indices}, {"view_psnr", r.view_psnr},
            {"view_ssim", r.view_ssim},       {"mean_psnr", r.mean_psnr},
            {"mean_ssim", r.mean_ssim},       {"lpips_available", r.lpips_available}};
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& recipe_name, const std::string& out_dir, int rows,
                 int cols, int width, int height, int holdout_every) {
    const Recipe recipe = recipe_by_name(recipe_name);
    const TwoPlaneParam capture{-1.0, 0.0};
    LightFieldDataset ds = generate_grid_dataset(recipe.scene, rows, cols, width, height,
                                                 capture, holdout_every);
    if (recipe.z_uv != capture.z_uv) ds = reparameterize_dataset(ds, recipe.z_uv);
    RunOutputs out{out_dir};
    write_manifest(out.dir, ds, &recipe.scene);
    out.files.push_back("manifest.json");
    for (const auto& v : ds.views) out.files.push_back(v.image_file);
    out.finish();
    std::cout << "generated " << ds.views.size() << " views (" << width << "x" << height
              << "), z_uv " << ds.param.z_uv << ", holdout "
              << ds.split_indices(true).size() << ", train "
              << ds.split_indices(false).size() << "\n";
    return 0;
}

struct TrainFlags {
    std::string data_dir, out_dir;
    std::string kind = "none";
    std::string ray_space = "two-plane";
    int grid = 0;
    std::vector<double> box_min{-1.6, -1.6, 0.0};
    std::vector<double> box_max{1.6, 1.6, 0.6};
    int width = 64, depth = 4, skip = 2, latent = 32;
    int pe_ray_bands = 8, pe_latent_bands = 8, pe_voxel_bands = 4;
    TrainConfig cfg{.batch_size = 1024,
                    .total_iters = 3000,
                    .ease_iters = 1000,
                    .lr_start = 5e-4,
                    .lr_end = 5e-5};
};

int cmd_train(const TrainFlags& f) {
    const LightFieldDataset ds = read_manifest(f.data_dir);
    ModelSpec spec;
    spec.kind = kind_by_name(f.kind);
    spec.ray_space = f.ray_space == "pluecker" ? RaySpace::pluecker : RaySpace::two_plane;
    spec.latent_dim = f.latent;
    spec.width = f.width;
    spec.depth = f.depth;
    spec.skip_layer = f.skip;
    spec.pe_ray = {f.pe_ray_bands, true, double(f.pe_ray_bands)};
    spec.pe_latent = {f.pe_latent_bands, true, double(f.pe_latent_bands)};
    spec.pe_voxel = {f.pe_voxel_bands, true, double(f.pe_voxel_bands)};
    spec.param = ds.param;
    if (f.grid > 0) {
        VoxelGrid grid;
        grid.resolution = f.grid;
        grid.box_min = {f.box_min[0], f.box_min[1], f.box_min[2]};
        grid.box_max = {f.box_max[0], f.box_max[1], f.box_max[2]};
        spec.subdivision = grid;
    }

    RunOutputs out{f.out_dir};
    auto state = make_train_state<float>(spec, f.cfg);
    const auto ckpt = out.path("checkpoint.ckpt");
    std::ofstream log(out.path("train_log.txt"));
    const auto trace = run_training(state, ds, &log, ckpt.string());
    save_checkpoint(ckpt.string(), state);
    out.finish();
    std::cout << "trained " << state.iteration << " iterations, final loss "
              << (trace.empty() ? 0.0 : trace.back()) << "\n";
    return 0;
}

int cmd_render(const std::string& ckpt, const std::string& out_dir, int rows, int cols,
               int width, int height, double cam_extent, double pix_extent,
               bool count_evals, int workers) {
    const auto state = load_checkpoint(ckpt);
    std::vector<GridCamera> cameras;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            GridCamera cam;
            cam.position = {grid_position(c, cols, cam_extent),
                            grid_position(r, rows, cam_extent), state.model.param.z_xy};
            cam.param = state.model.param;
            cam.u_min = -pix_extent;
            cam.u_max = pix_extent;
            cam.v_min = -pix_extent;
            cam.v_max = pix_extent;
            cam.width = width;
            cam.height = height;
            cameras.push_back(cam);
        }
    RunOutputs out{out_dir};
    RenderStats stats;
    const auto images = render_views(state.model, cameras, workers, &stats);
    for (std::size_t i = 0; i < images.size(); ++i)
        write_image(out.path("render_" + std::to_string(i) + ".png").string(), images[i]);
    json report{{"views", int(cameras.size())},
                {"width", width},
                {"height", height},
                {"color_evals", stats.color_evals},
                {"embedding_evals", stats.embedding_evals},
                {"seconds", stats.seconds}};
    std::ofstream(out.path("render_report.json")) << report.dump(2) << "\n";
    out.finish();
    if (count_evals) std::cout << "color_evals " << stats.color_evals << "\n";
    else std::cout << "rendered " << cameras.size() << " views\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_dir, const std::string& split, int workers) {
    const auto state = load_checkpoint(ckpt);
    const LightFieldDataset ds = read_manifest(data_dir);
    const bool holdout = split != "train";
    const auto idx = ds.split_indices(holdout);
    if (idx.empty()) throw EmptySplit();

    std::vector<GridCamera> cameras;
    for (int i : idx) cameras.push_back(ds.views[std::size_t(i)].camera);
    RenderStats stats;
    const auto images = render_views(state.model, cameras, workers, &stats);

    MetricsReport report;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        report.view_indices.push_back(idx[k]);
        report.view_psnr.push_back(psnr(images[k], ds.images[std::size_t(idx[k])]));
        report.view_ssim.push_back(ssim(images[k], ds.images[std::size_t(idx[k])]));
        report.mean_psnr += report.view_psnr.back();
        report.mean_ssim += report.view_ssim.back();
    }
    report.mean_psnr /= double(idx.size());
    report.mean_ssim /= double(idx.size());

    RunOutputs out{out_dir};
    std::ofstream(out.path("metrics.json")) << report_to_json(report).dump(2) << "\n";
    std::ofstream txt(out.path("metrics.txt"));
    for (std::size_t k = 0; k < idx.size(); ++k)
        txt << "view " << idx[k] << " psnr " << report.view_psnr[k] << " ssim "
            << report.view_ssim[k] << "\n";
    txt << "mean psnr " << report.mean_psnr << " ssim " << report.mean_ssim << "\n";
    for (std::size_t k = 0; k < images.size(); ++k)
        write_image(out.path("eval_" + std::to_string(idx[k]) + ".png").string(),
                    images[k]);
    out.finish();
    std::cout << "mean psnr " << report.mean_psnr << " ssim " << report.mean_ssim << "\n";
    return 0;
}

int cmd_epi(const std::string& ckpt, const std::string& data_dir,
            const std::string& out_file, const EpiSpec& spec) {
    Image epi;
    if (!ckpt.empty()) {
        const auto state = load_checkpoint(ckpt);
        epi = epi_slice(state.model, spec);
    } else {
        epi = epi_slice(read_manifest(data_dir), spec);
    }
    fs::create_directories(fs::path(out_file).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_file).parent_path());
    write_image(out_file, epi);
    std::cout << "wrote " << out_file << " (" << epi.width << "x" << epi.height << ")\n";
    return 0;
}

int cmd_embedviz(const std::string& ckpt, const std::string& out_file, int width,
                 int height, double cam_x, double cam_y, double pix_extent) {
    const auto state = load_checkpoint(ckpt);
    GridCamera cam;
    cam.position = {cam_x, cam_y, state.model.param.z_xy};
    cam.param = state.model.param;
    cam.u_min = -pix_extent;
    cam.u_max = pix_extent;
    cam.v_min = -pix_extent;
    cam.v_max = pix_extent;
    cam.width = width;
    cam.height = height;
    const auto res = embedding_pca_image(state.model, cam);
    fs::create_directories(fs::path(out_file).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_file).parent_path());
    write_image(out_file, res.image);
    if (res.constant_embedding)
        std::cout << "warning: embedding is constant over the view\n";
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural light field toolkit"};
    app.require_subcommand(1);
    app.set_config("--config");

    std::uint64_t seed = 0;
    int workers = 1;
    bool deterministic = false;
    app.add_option("--seed", seed, "root random seed")->capture_default_str();
    app.add_option("--workers", workers, "render/eval worker threads")
        ->capture_default_str();
    app.add_flag("--deterministic", deterministic,
                 "force single-worker, bitwise-reproducible runs");

    // generate
    auto* gen = app.add_subcommand("generate", "write a dataset from a scene recipe");
    std::string recipe = "plane0", gen_out;
    int rows = 5, cols = 5, img_w = 64, img_h = 64, holdout_every = 8;
    gen->add_option("--recipe", recipe, "plane0 | plane1 | plane3 | two-plane-occluder")
        ->capture_default_str();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--rows", rows)->capture_default_str();
    gen->add_option("--cols", cols)->capture_default_str();
    gen->add_option("--width", img_w)->capture_default_str();
    gen->add_option("--height", img_h)->capture_default_str();
    gen->add_option("--holdout-every", holdout_every)->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    TrainFlags tf;
    tr->add_option("--data", tf.data_dir, "dataset directory")->required();
    tr->add_option("--out", tf.out_dir, "run directory")->required();
    tr->add_option("--kind", tf.kind, "none | feature | affine")->capture_default_str();
    tr->add_option("--ray-space", tf.ray_space, "two-plane | pluecker")
        ->capture_default_str();
    tr->add_option("--grid", tf.grid, "voxel grid resolution N (0 = flat)")
        ->capture_default_str();
    tr->add_option("--box-min", tf.box_min, "grid box minimum (x y z)")->expected(3);
    tr->add_option("--box-max", tf.box_max, "grid box maximum (x y z)")->expected(3);
    tr->add_option("--net-width", tf.width)->capture_default_str();
    tr->add_option("--net-depth", tf.depth)->capture_default_str();
    tr->add_option("--skip-layer", tf.skip)->capture_default_str();
    tr->add_option("--latent", tf.latent)->capture_default_str();
    tr->add_option("--pe-ray", tf.pe_ray_bands)->capture_default_str();
    tr->add_option("--pe-latent", tf.pe_latent_bands)->capture_default_str();
    tr->add_option("--pe-voxel", tf.pe_voxel_bands)->capture_default_str();
    tr->add_option("--batch", tf.cfg.batch_size)->capture_default_str();
    tr->add_option("--iters", tf.cfg.total_iters)->capture_default_str();
    tr->add_option("--ease", tf.cfg.ease_iters)->capture_default_str();
    tr->add_option("--lr-start", tf.cfg.lr_start)->capture_default_str();
    tr->add_option("--lr-end", tf.cfg.lr_end)->capture_default_str();
    tr->add_option("--checkpoint-every", tf.cfg.checkpoint_every)->capture_default_str();

    // render
    auto* rd = app.add_subcommand("render", "render views from a checkpoint");
    std::string rd_ckpt, rd_out;
    int rd_rows = 1, rd_cols = 1, rd_w = 64, rd_h = 64;
    double rd_cam_extent = 0.25, rd_pix_extent = 1.0;
    bool count_evals = false;
    rd->add_option("--checkpoint", rd_ckpt)->required();
    rd->add_option("--out", rd_out)->required();
    rd->add_option("--rows", rd_rows)->capture_default_str();
    rd->add_option("--cols", rd_cols)->capture_default_str();
    rd->add_option("--width", rd_w)->capture_default_str();
    rd->add_option("--height", rd_h)->capture_default_str();
    rd->add_option("--camera-extent", rd_cam_extent)->capture_default_str();
    rd->add_option("--pixel-extent", rd_pix_extent)->capture_default_str();
    rd->add_flag("--count-evals", count_evals, "print the color-net evaluation count");

    // eval
    auto* ev = app.add_subcommand("eval", "metrics of a checkpoint against a dataset");
    std::string ev_ckpt, ev_data, ev_out, ev_split = "holdout";
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--split", ev_split, "holdout | train")->capture_default_str();

    // epi
    auto* ep = app.add_subcommand("epi", "write an epipolar-plane image");
    std::string ep_ckpt, ep_data, ep_out;
    EpiSpec ep_spec;
    std::string ep_axis = "ux";
    ep->add_option("--checkpoint", ep_ckpt, "model checkpoint (overrides --data)");
    ep->add_option("--data", ep_data, "dataset directory");
    ep->add_option("--out", ep_out, "output image file")->required();
    ep->add_option("--axis", ep_axis, "ux | vy")->capture_default_str();
    ep->add_option("--fixed-cam", ep_spec.fixed_cam)->capture_default_str();
    ep->add_option("--fixed-img", ep_spec.fixed_img)->capture_default_str();
    ep->add_option("--cam-steps", ep_spec.cam_steps)->capture_default_str();
    ep->add_option("--img-steps", ep_spec.img_steps)->capture_default_str();
    ep->add_option("--camera-extent", ep_spec.cam_extent)->capture_default_str();
    ep->add_option("--pixel-extent", ep_spec.img_extent)->capture_default_str();

    // embedviz
    auto* em = app.add_subcommand("embedviz", "PCA image of the ray embedding");
    std::string em_ckpt, em_out;
    int em_w = 64, em_h = 64;
    double em_x = 0, em_y = 0, em_extent = 1.0;
    em->add_option("--checkpoint", em_ckpt)->required();
    em->add_option("--out", em_out)->required();
    em->add_option("--width", em_w)->capture_default_str();
    em->add_option("--height", em_h)->capture_default_str();
    em->add_option("--camera-x", em_x)->capture_default_str();
    em->add_option("--camera-y", em_y)->capture_default_str();
    em->add_option("--pixel-extent", em_extent)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (deterministic) workers = 1;
    tf.cfg.seed = seed;

    try {
        if (app.got_subcommand(gen))
            return cmd_generate(recipe, gen_out, rows, cols, img_w, img_h, holdout_every);
        if (app.got_subcommand(tr)) return cmd_train(tf);
        if (app.got_subcommand(rd))
            return cmd_render(rd_ckpt, rd_out, rd_rows, rd_cols, rd_w, rd_h,
                              rd_cam_extent, rd_pix_extent, count_evals, workers);
        if (app.got_subcommand(ev))
            return cmd_eval(ev_ckpt, ev_data, ev_out, ev_split, workers);
        if (app.got_subcommand(ep)) {
            if (ep_ckpt.empty() && ep_data.empty())
                throw CLI::ValidationError("epi", "needs --checkpoint or --data");
            ep_spec.axis = ep_axis == "vy" ? EpiAxis::vy : EpiAxis::ux;
            return cmd_epi(ep_ckpt, ep_data, ep_out, ep_spec);
        }
        if (app.got_subcommand(em))
            return cmd_embedviz(em_ckpt, em_out, em_w, em_h, em_x, em_y, em_extent);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const MalformedHeader& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const SchemaVersionMismatch& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const MissingField& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const VersionMismatch& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const CorruptCheckpoint& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
