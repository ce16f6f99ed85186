#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nlf/common.hpp"
#include "nlf/scenes.hpp"

namespace nlf {

inline constexpr int kManifestSchemaVersion = 1;

using json = nlohmann::json;

inline json require(const json& j, const std::string& key) {
    if (!j.contains(key)) throw MissingField("manifest missing field: " + key);
    return j.at(key);
}

inline json scene_to_json(const AnalyticScene& scene) {
    json rects = json::array();
    for (const auto& r : scene.rects) {
        json t;
        switch (r.texture.kind) {
            case Texture::Kind::checker: t["kind"] = "checker"; break;
            case Texture::Kind::sine: t["kind"] = "sine"; break;
            case Texture::Kind::image: t["kind"] = "image"; break;
        }
        t["scale"] = r.texture.scale;
        t["angle"] = r.texture.angle;
        t["color_a"] = {r.texture.color_a.r, r.texture.color_a.g, r.texture.color_a.b};
        t["color_b"] = {r.texture.color_b.r, r.texture.color_b.g, r.texture.color_b.b};
        if (!r.texture.image_path.empty()) t["image_path"] = r.texture.image_path;
        rects.push_back({{"z", r.z},
                         {"s_min", r.s_min},
                         {"s_max", r.s_max},
                         {"t_min", r.t_min},
                         {"t_max", r.t_max},
                         {"opacity", r.opacity},
                         {"texture", t}});
    }
    return {{"rects", rects},
            {"background", {scene.background.r, scene.background.g, scene.background.b}}};
}

inline AnalyticScene scene_from_json(const json& j) {
    AnalyticScene scene;
    const auto bg = require(j, "background");
    scene.background = {bg[0], bg[1], bg[2]};
    for (const auto& rj : require(j, "rects")) {
        SceneRect r;
        r.z = require(rj, "z");
        r.s_min = require(rj, "s_min");
        r.s_max = require(rj, "s_max");
        r.t_min = require(rj, "t_min");
        r.t_max = require(rj, "t_max");
        r.opacity = require(rj, "opacity");
        const auto tj = require(rj, "texture");
        const std::string kind = require(tj, "kind");
        if (kind == "checker") r.texture.kind = Texture::Kind::checker;
        else if (kind == "sine") r.texture.kind = Texture::Kind::sine;
        else if (kind == "image") r.texture.kind = Texture::Kind::image;
        else throw MissingField("unknown texture kind: " + kind);
        r.texture.scale = require(tj, "scale");
        r.texture.angle = require(tj, "angle");
        const auto ca = require(tj, "color_a"), cb = require(tj, "color_b");
        r.texture.color_a = {ca[0], ca[1], ca[2]};
        r.texture.color_b = {cb[0], cb[1], cb[2]};
        if (tj.contains("image_path"))
            r.texture.image_path = tj.at("image_path").get<std::string>();
        scene.rects.push_back(std::move(r));
    }
    return scene;
}

// Writes manifest.json plus one PNG per view into `dir`. The optional scene
// block preserves the generating recipe for provenance.
inline void write_manifest(const std::filesystem::path& dir, const LightFieldDataset& ds,
                           const AnalyticScene* scene = nullptr) {
    std::filesystem::create_directories(dir);
    json j;
    j["schema_version"] = kManifestSchemaVersion;
    j["grid"] = {{"rows", ds.grid_rows}, {"cols", ds.grid_cols}};
    j["parameterization"] = {{"z_xy", ds.param.z_xy}, {"z_uv", ds.param.z_uv}};
    // the plane the pixel windows were captured against, which the chart
    // plane may have been moved away from by reparameterization
    const TwoPlaneParam capture =
        ds.views.empty() ? ds.param : ds.views[0].camera.param;
    j["capture"] = {{"z_xy", capture.z_xy}, {"z_uv", capture.z_uv}};
    j["camera_extent"] = ds.camera_extent;
    j["pixel_extent"] = ds.pixel_extent;
    j["holdout_every"] = ds.holdout_every;
    j["image_size"] = {{"width", ds.image_width()}, {"height", ds.image_height()}};
    if (scene) j["scene"] = scene_to_json(*scene);
    json views = json::array();
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto& v = ds.views[i];
        views.push_back({{"file", v.image_file},
                         {"holdout", v.holdout},
                         {"position", {v.camera.position.x, v.camera.position.y,
                                       v.camera.position.z}}});
        write_image((dir / v.image_file).string(), ds.images[i]);
    }
    j["views"] = views;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir.string());
    f << j.dump(2) << "\n";
}

inline LightFieldDataset read_manifest(const std::filesystem::path& dir,
                                       AnalyticScene* scene = nullptr) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot open manifest in " + dir.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw MalformedHeader(std::string("manifest parse error: ") + e.what());
    }
    const int version = require(j, "schema_version");
    if (version != kManifestSchemaVersion)
        throw SchemaVersionMismatch("manifest schema version " + std::to_string(version));

    LightFieldDataset ds;
    const auto grid = require(j, "grid");
    ds.grid_rows = require(grid, "rows");
    ds.grid_cols = require(grid, "cols");
    const auto param = require(j, "parameterization");
    ds.param.z_xy = require(param, "z_xy");
    ds.param.z_uv = require(param, "z_uv");
    const auto capture_j = require(j, "capture");
    TwoPlaneParam capture;
    capture.z_xy = require(capture_j, "z_xy");
    capture.z_uv = require(capture_j, "z_uv");
    ds.camera_extent = require(j, "camera_extent");
    ds.pixel_extent = require(j, "pixel_extent");
    ds.holdout_every = require(j, "holdout_every");
    const auto size = require(j, "image_size");
    const int w = require(size, "width"), h = require(size, "height");
    if (scene && j.contains("scene")) *scene = scene_from_json(j.at("scene"));

    for (const auto& vj : require(j, "views")) {
        DatasetView v;
        v.image_file = require(vj, "file").get<std::string>();
        v.holdout = require(vj, "holdout");
        const auto pos = require(vj, "position");
        v.camera.position = {pos[0], pos[1], pos[2]};
        v.camera.param = capture;
        v.camera.u_min = -ds.pixel_extent;
        v.camera.u_max = ds.pixel_extent;
        v.camera.v_min = -ds.pixel_extent;
        v.camera.v_max = ds.pixel_extent;
        v.camera.width = w;
        v.camera.height = h;
        ds.images.push_back(read_image((dir / v.image_file).string()));
        ds.views.push_back(std::move(v));
    }
    return ds;
}

}  // namespace nlf
