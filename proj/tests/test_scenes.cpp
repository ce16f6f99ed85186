#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nlf/dataset_io.hpp"
#include "nlf/scenes.hpp"

using namespace nlf;

namespace {

AnalyticScene single_plane_scene(double z_st = 0.0, double texture_scale = 2.0) {
    AnalyticScene scene;
    SceneRect rect;
    rect.z = z_st;
    rect.s_min = rect.t_min = -4;
    rect.s_max = rect.t_max = 4;
    rect.texture.kind = Texture::Kind::checker;
    rect.texture.scale = texture_scale;
    scene.rects.push_back(rect);
    return scene;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nlf_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("analytic_lightfield") {
    SECTION("plane at z_uv: color depends only on (u, v)") {
        const TwoPlaneParam param{-1.0, 0.0};
        const auto scene = single_plane_scene(0.0);
        Rng rng(1);
        for (int i = 0; i < 100; ++i) {
            const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
            const Rgb a = analytic_lightfield(scene, {rng.uniform(-1, 1), rng.uniform(-1, 1), u, v}, param);
            const Rgb b = analytic_lightfield(scene, {rng.uniform(-1, 1), rng.uniform(-1, 1), u, v}, param);
            for (int k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
        }
    }

    SECTION("similar-triangles chart point") {
        // z_xy = 0, z_st = 1, z_uv = 2, x = 0.5, u = 0:
        // s = x + (u - x) * z_st / z_uv = 0.25
        const TwoPlaneParam param{0.0, 2.0};
        const auto st = coords_at_depth({0.5, 0.0, 0.0, 0.0}, param, 1.0);
        CHECK(st[0] == Catch::Approx(0.25));
        CHECK(st[1] == Catch::Approx(0.0).margin(1e-15));
    }

    SECTION("miss returns background") {
        const TwoPlaneParam param{-1.0, 0.0};
        auto scene = single_plane_scene(0.0);
        scene.rects[0].s_max = 0.1;
        scene.rects[0].s_min = -0.1;
        scene.background = {0.25, 0.5, 0.75};
        const Rgb c = analytic_lightfield(scene, {0, 0, 5.0, 0}, param);
        CHECK(c.r == Catch::Approx(0.25));
        CHECK(c.g == Catch::Approx(0.5));
        CHECK(c.b == Catch::Approx(0.75));
    }

    SECTION("front rectangle occludes back") {
        const TwoPlaneParam param{-1.0, 0.0};
        AnalyticScene scene;
        SceneRect front, back;
        front.z = 0.0;
        front.s_min = front.t_min = -0.5;
        front.s_max = front.t_max = 0.5;
        front.texture.kind = Texture::Kind::checker;
        front.texture.scale = 1e-6;  // effectively solid
        front.texture.color_a = front.texture.color_b = {1, 0, 0};
        back.z = 0.5;
        back.s_min = back.t_min = -4;
        back.s_max = back.t_max = 4;
        back.texture.kind = Texture::Kind::checker;
        back.texture.scale = 1e-6;
        back.texture.color_a = back.texture.color_b = {0, 1, 0};
        scene.rects = {back, front};  // declaration order must not matter

        const Rgb hit_front = analytic_lightfield(scene, {0, 0, 0.2, 0.2}, param);
        CHECK(hit_front.r == Catch::Approx(1.0));
        CHECK(hit_front.g == Catch::Approx(0.0).margin(1e-15));
        const Rgb hit_back = analytic_lightfield(scene, {0, 0, 0.9, 0.9}, param);
        CHECK(hit_back.g == Catch::Approx(1.0));
    }

    SECTION("axis-aligned constancy is exact") {
        const TwoPlaneParam param{-1.0, 0.0};
        const auto scene = single_plane_scene(0.0, 7.3);
        const Rgb a = analytic_lightfield(scene, {-0.9, 0.4, 0.33, -0.21}, param);
        const Rgb b = analytic_lightfield(scene, {0.7, -0.8, 0.33, -0.21}, param);
        for (int k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
    }
}

TEST_CASE("quadrature_render") {
    SECTION("zero density emits nothing") {
        RadianceFieldOracle o;
        o.sigma = [](const Vec3&) { return 0.0; };
        o.emission = [](const Vec3&, const Vec3&) { return Rgb{1, 1, 1}; };
        o.t_near = 0;
        o.t_far = 2;
        const Rgb c = quadrature_render(o, make_ray({0, 0, -1}, {0, 0, 1}), 128);
        CHECK(c.r == 0.0);
    }

    SECTION("homogeneous slab matches the closed form") {
        const double sigma0 = 3.7, len = 0.8;
        const Rgb emit{0.9, 0.5, 0.2};
        RadianceFieldOracle o;
        o.sigma = [sigma0](const Vec3&) { return sigma0; };
        o.emission = [emit](const Vec3&, const Vec3&) { return emit; };
        o.t_near = 1.0;
        o.t_far = 1.0 + len;
        const Rgb c = quadrature_render(o, make_ray({0, 0, -1}, {0, 0, 1}), 1024);
        const double expected = 1.0 - std::exp(-sigma0 * len);
        CHECK(c.r == Catch::Approx(emit.r * expected).margin(1e-6));
        CHECK(c.g == Catch::Approx(emit.g * expected).margin(1e-6));
        CHECK(c.b == Catch::Approx(emit.b * expected).margin(1e-6));
    }

    SECTION("doubling samples barely changes a smooth field") {
        RadianceFieldOracle o;
        o.sigma = [](const Vec3& p) { return 1.0 + 0.5 * std::sin(3 * p.z); };
        o.emission = [](const Vec3& p, const Vec3&) {
            return Rgb{0.5 + 0.4 * std::cos(2 * p.z), 0.3, 0.6};
        };
        o.t_near = 0;
        o.t_far = 2;
        const Ray ray = make_ray({0, 0, -1}, {0, 0, 1});
        const Rgb a = quadrature_render(o, ray, 512);
        const Rgb b = quadrature_render(o, ray, 1024);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-4);
    }
}

TEST_CASE("analytic and quadrature oracles agree on opaque rectangles") {
    const TwoPlaneParam param{-1.0, 0.0};
    AnalyticScene scene;
    SceneRect r1, r2;
    r1.z = 0.0;
    r1.s_min = r1.t_min = -0.6;
    r1.s_max = r1.t_max = 0.6;
    r1.texture.kind = Texture::Kind::sine;
    r1.texture.scale = 1.5;
    r2.z = 0.5;
    r2.s_min = r2.t_min = -3;
    r2.s_max = r2.t_max = 3;
    r2.texture.kind = Texture::Kind::checker;
    r2.texture.scale = 1.0;
    r2.texture.color_a = {0.2, 0.9, 0.4};
    scene.rects = {r1, r2};

    const double thickness = 1e-4;  // sigma * thickness = 20 inside slabs
    // unit-length directions: the farthest slab (z = 0.5) is < 4 units away
    const auto oracle = slab_oracle(scene, thickness, 0.0, 4.0);

    Rng rng(77);
    int agree = 0, total = 0;
    for (int i = 0; i < 500; ++i) {
        const RayCoords4D rc{rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25),
                             rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Ray ray = from_two_plane(rc, param);
        const Rgb a = analytic_lightfield(scene, rc, param);
        // enough samples that each slab is well resolved
        const Rgb q = quadrature_render(oracle, ray, 60000);
        ++total;
        bool ok = true;
        for (int k = 0; k < 3; ++k)
            if (std::abs(a[k] - q[k]) > 0.01) ok = false;
        agree += ok ? 1 : 0;
    }
    CHECK(double(agree) / total >= 0.99);
}

TEST_CASE("generate_grid_dataset") {
    const TwoPlaneParam param{-1.0, 0.0};

    SECTION("single camera shares (x, y) across pixels") {
        const auto ds = generate_grid_dataset(single_plane_scene(), 1, 1, 4, 4, param, 0);
        REQUIRE(ds.views.size() == 1);
        const auto r00 = to_two_plane(ds.pixel_ray(0, 0, 0), param);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const auto r = to_two_plane(ds.pixel_ray(0, x, y), param);
                CHECK(r.x == Catch::Approx(r00.x).margin(1e-12));
                CHECK(r.y == Catch::Approx(r00.y).margin(1e-12));
            }
    }

    SECTION("constant scene gives constant pixels") {
        AnalyticScene scene;
        SceneRect rect;
        rect.z = 0.0;
        rect.s_min = rect.t_min = -50;
        rect.s_max = rect.t_max = 50;
        rect.texture.kind = Texture::Kind::checker;
        rect.texture.scale = 1e-9;
        rect.texture.color_a = rect.texture.color_b = {0.3, 0.6, 0.9};
        scene.rects.push_back(rect);
        const auto ds = generate_grid_dataset(scene, 5, 5, 8, 8, param, 8);
        for (const auto& img : ds.images)
            for (const auto& p : img.pixels) {
                CHECK(p.r == Catch::Approx(0.3));
                CHECK(p.g == Catch::Approx(0.6));
                CHECK(p.b == Catch::Approx(0.9));
            }
    }

    SECTION("holdout stride splits 3x3 into (5, 4)") {
        const auto ds = generate_grid_dataset(single_plane_scene(), 3, 3, 4, 4, param, 2);
        CHECK(ds.split_indices(false).size() == 5);
        CHECK(ds.split_indices(true).size() == 4);
        // masks partition the views
        for (int k : {2, 3, 8}) {
            const auto d2 = generate_grid_dataset(single_plane_scene(), 3, 3, 2, 2, param, k);
            CHECK(d2.split_indices(false).size() + d2.split_indices(true).size() == 9);
        }
    }
}

TEST_CASE("reparameterize_dataset") {
    const TwoPlaneParam param{-1.0, 0.0};
    const auto ds = generate_grid_dataset(single_plane_scene(), 3, 3, 8, 8, param, 2);

    SECTION("identity when nothing moves") {
        const auto same = reparameterize_dataset(ds, 0.0);
        CHECK(same.param.z_uv == ds.param.z_uv);
    }

    SECTION("moved plane recomputes (u, v) by re-intersection") {
        const auto moved = reparameterize_dataset(ds, 1.0);
        CHECK(moved.param.z_uv == 1.0);
        for (int v = 0; v < int(ds.views.size()); ++v)
            for (int y = 0; y < 8; y += 3)
                for (int x = 0; x < 8; x += 3) {
                    const Ray ray = ds.pixel_ray(v, x, y);
                    const Ray ray2 = moved.pixel_ray(v, x, y);
                    // world rays unchanged
                    CHECK((ray.origin - ray2.origin).norm() < 1e-12);
                    CHECK((ray.direction - ray2.direction).norm() < 1e-12);
                    const auto old_rc = to_two_plane(ray, ds.param);
                    const auto new_rc = to_two_plane(ray, moved.param);
                    const double scale = (1.0 - ds.param.z_xy) / (0.0 - ds.param.z_xy);
                    CHECK(new_rc.u ==
                          Catch::Approx(old_rc.x + (old_rc.u - old_rc.x) * scale));
                }
    }

    SECTION("colors untouched, round-trip is the identity") {
        const auto moved = reparameterize_dataset(ds, 3.0);
        const auto back = reparameterize_dataset(moved, 0.0);
        for (std::size_t i = 0; i < ds.images.size(); ++i)
            for (std::size_t p = 0; p < ds.images[i].pixels.size(); ++p)
                for (int k = 0; k < 3; ++k) {
                    CHECK(moved.images[i].pixels[p][k] == ds.images[i].pixels[p][k]);
                    CHECK(back.images[i].pixels[p][k] == ds.images[i].pixels[p][k]);
                }
        CHECK(std::abs(back.param.z_uv - ds.param.z_uv) < 1e-9);
    }
}

TEST_CASE("image io") {
    const auto dir = temp_dir("image_io");

    Image img(4, 3);
    Rng rng(55);
    for (auto& p : img.pixels) p = {rng.uniform(), rng.uniform(), rng.uniform()};

    SECTION("ppm header and payload size") {
        write_ppm((dir / "a.ppm").string(), img);
        std::ifstream f(dir / "a.ppm", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
        const std::string header = "P6\n4 3\n255\n";
        REQUIRE(bytes.size() == header.size() + 36);
        CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
    }

    SECTION("round-trip within quantization error") {
        for (const char* name : {"a.ppm", "a.png"}) {
            write_image((dir / name).string(), img);
            const Image back = read_image((dir / name).string());
            REQUIRE(back.width == 4);
            REQUIRE(back.height == 3);
            for (std::size_t i = 0; i < img.pixels.size(); ++i)
                for (int k = 0; k < 3; ++k)
                    CHECK(std::abs(back.pixels[i][k] - img.pixels[i][k]) <= 1.0 / 510 + 1e-9);
        }
    }

    SECTION("black and white round-trip exactly") {
        for (double v : {0.0, 1.0}) {
            Image flat(5, 5, {v, v, v});
            write_image((dir / "flat.png").string(), flat);
            const Image back = read_image((dir / "flat.png").string());
            for (const auto& p : back.pixels)
                for (int k = 0; k < 3; ++k) CHECK(p[k] == v);
        }
    }

    SECTION("malformed header") {
        std::ofstream f(dir / "bad.ppm", std::ios::binary);
        f << "P5\n4 3\n255\n";
        f.close();
        CHECK_THROWS_AS(read_ppm((dir / "bad.ppm").string()), MalformedHeader);
        CHECK_THROWS_AS(read_image((dir / "missing.png").string()), IoError);
    }
}

TEST_CASE("manifest io") {
    const auto dir = temp_dir("manifest");
    const TwoPlaneParam param{-1.0, 0.0};
    const auto scene = single_plane_scene();
    const auto ds = generate_grid_dataset(scene, 2, 3, 6, 4, param, 3);

    SECTION("round-trip metadata") {
        write_manifest(dir, ds, &scene);
        AnalyticScene scene_back;
        const auto back = read_manifest(dir, &scene_back);
        CHECK(back.grid_rows == 2);
        CHECK(back.grid_cols == 3);
        CHECK(back.param.z_xy == ds.param.z_xy);
        CHECK(back.param.z_uv == ds.param.z_uv);
        CHECK(back.holdout_every == 3);
        REQUIRE(back.views.size() == ds.views.size());
        for (std::size_t i = 0; i < ds.views.size(); ++i) {
            CHECK(back.views[i].holdout == ds.views[i].holdout);
            CHECK((back.views[i].camera.position - ds.views[i].camera.position).norm() <
                  1e-12);
        }
        REQUIRE(scene_back.rects.size() == 1);
        CHECK(scene_back.rects[0].texture.scale == scene.rects[0].texture.scale);
    }

    SECTION("missing field") {
        write_manifest(dir, ds, &scene);
        // strip the parameterization key
        std::ifstream in(dir / "manifest.json");
        nlohmann::json j;
        in >> j;
        in.close();
        j.erase("parameterization");
        std::ofstream out(dir / "manifest.json");
        out << j.dump(2);
        out.close();
        CHECK_THROWS_AS(read_manifest(dir), MissingField);
    }

    SECTION("schema version mismatch") {
        write_manifest(dir, ds, &scene);
        std::ifstream in(dir / "manifest.json");
        nlohmann::json j;
        in >> j;
        in.close();
        j["schema_version"] = 999;
        std::ofstream out(dir / "manifest.json");
        out << j.dump(2);
        out.close();
        CHECK_THROWS_AS(read_manifest(dir), SchemaVersionMismatch);
    }

    SECTION("hand-written minimal manifest") {
        const auto mini = temp_dir("manifest_mini");
        Image img(2, 2, {0.5, 0.5, 0.5});
        write_image((mini / "v0.png").string(), img);
        std::ofstream f(mini / "manifest.json");
        f << R"({
          "schema_version": 1,
          "grid": {"rows": 1, "cols": 1},
          "parameterization": {"z_xy": -1.0, "z_uv": 0.0},
          "capture": {"z_xy": -1.0, "z_uv": 0.0},
          "camera_extent": 0.25,
          "pixel_extent": 1.0,
          "holdout_every": 0,
          "image_size": {"width": 2, "height": 2},
          "views": [{"file": "v0.png", "holdout": false, "position": [0.0, 0.0, -1.0]}]
        })";
        f.close();
        const auto ds2 = read_manifest(mini);
        REQUIRE(ds2.views.size() == 1);
        CHECK(ds2.image_width() == 2);
        CHECK(ds2.views[0].camera.position.z == -1.0);
        CHECK_FALSE(ds2.views[0].holdout);
    }
}
