#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "nlf/common.hpp"
#include "nlf/geometry.hpp"
#include "nlf/image.hpp"
#include "nlf/model.hpp"

namespace nlf {

// Procedural texture over rectangle-local (s, t); exact ground truth for the
// analytic light field oracle. Image-backed textures sample bilinearly.
struct Texture {
    enum class Kind { checker, sine, image };
    Kind kind = Kind::checker;
    double scale = 4;  // checker cells (or sine cycles) per unit
    double angle = 0;  // grating direction, radians
    Rgb color_a{1, 1, 1};
    Rgb color_b{0, 0, 0};
    std::string image_path;
    Image image;

    Rgb sample(double s, double t) const {
        switch (kind) {
            case Kind::checker: {
                const long cs = (long)std::floor(s * scale);
                const long ct = (long)std::floor(t * scale);
                return ((cs + ct) & 1) == 0 ? color_a : color_b;
            }
            case Kind::sine: {
                const double phase = s * std::cos(angle) + t * std::sin(angle);
                const double w = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * scale * phase);
                return color_a * w + color_b * (1.0 - w);
            }
            case Kind::image: {
                const double fx = std::clamp(s, 0.0, 1.0) * (image.width - 1);
                const double fy = std::clamp(t, 0.0, 1.0) * (image.height - 1);
                const int x0 = int(fx), y0 = int(fy);
                const int x1 = std::min(x0 + 1, image.width - 1);
                const int y1 = std::min(y0 + 1, image.height - 1);
                const double ax = fx - x0, ay = fy - y0;
                return image.at(x0, y0) * ((1 - ax) * (1 - ay)) +
                       image.at(x1, y0) * (ax * (1 - ay)) +
                       image.at(x0, y1) * ((1 - ax) * ay) + image.at(x1, y1) * (ax * ay);
            }
        }
        return {};
    }
};

struct SceneRect {
    double z = 0;  // depth of the textured plane
    double s_min = -1, s_max = 1, t_min = -1, t_max = 1;
    double opacity = 1;
    Texture texture;

    // texture coordinates normalized to the rectangle extent for image textures
    Rgb shade(double s, double t) const {
        if (texture.kind == Texture::Kind::image)
            return texture.sample((s - s_min) / (s_max - s_min),
                                  (t - t_min) / (t_max - t_min));
        return texture.sample(s, t);
    }
};

struct AnalyticScene {
    std::vector<SceneRect> rects;  // any order; composited front-to-back by z
    Rgb background{0, 0, 0};
};

// Point the chart ray reaches at depth z (similar triangles along the chart).
inline std::array<double, 2> coords_at_depth(const RayCoords4D& r,
                                             const TwoPlaneParam& param, double z) {
    const double f = (z - param.z_xy) / (param.z_uv - param.z_xy);
    return {r.x + (r.u - r.x) * f, r.y + (r.v - r.y) * f};
}

// Closed-form light field of stacked textured rectangles, over-composited by
// rectangle opacity in ascending depth order.
inline Rgb analytic_lightfield(const AnalyticScene& scene, const RayCoords4D& r,
                               const TwoPlaneParam& param) {
    std::vector<const SceneRect*> order;
    order.reserve(scene.rects.size());
    for (const auto& rect : scene.rects) order.push_back(&rect);
    std::sort(order.begin(), order.end(),
              [](const SceneRect* a, const SceneRect* b) { return a->z < b->z; });

    Rgb out;
    double trans = 1.0;
    for (const SceneRect* rect : order) {
        const auto st = coords_at_depth(r, param, rect->z);
        if (st[0] < rect->s_min || st[0] > rect->s_max || st[1] < rect->t_min ||
            st[1] > rect->t_max)
            continue;
        out = out + rect->shade(st[0], st[1]) * (trans * rect->opacity);
        trans *= (1.0 - rect->opacity);
    }
    return out + scene.background * trans;
}

// Continuous emission/absorption field with integration bounds; the ground
// truth the quadrature renderer integrates.
struct RadianceFieldOracle {
    std::function<double(const Vec3&)> sigma;            // density >= 0
    std::function<Rgb(const Vec3&, const Vec3&)> emission;  // (point, direction)
    double t_near = 0;
    double t_far = 1;
};

// Quadrature over uniform strata (midpoint rule) with exclusive accumulated
// transmittance, so a homogeneous slab telescopes to its closed form.
inline Rgb quadrature_render(const RadianceFieldOracle& oracle, const Ray& ray,
                             int num_samples) {
    const double dt = (oracle.t_far - oracle.t_near) / num_samples;
    Rgb out;
    double optical_depth = 0;
    for (int k = 0; k < num_samples; ++k) {
        const double t = oracle.t_near + (k + 0.5) * dt;
        const Vec3 p = ray.at(t);
        const double s = oracle.sigma(p);
        const double trans = std::exp(-optical_depth);
        const double absorb = 1.0 - std::exp(-s * dt);
        if (absorb > 0) out = out + oracle.emission(p, ray.direction) * (trans * absorb);
        optical_depth += s * dt;
    }
    return out;
}

// Thin-slab conversion of an analytic rectangle scene, for cross-checking the
// two oracles: each rectangle becomes a slab of the given thickness with
// sigma chosen so that the slab's alpha matches the rectangle opacity
// (opaque rectangles use optical depth 20).
inline RadianceFieldOracle slab_oracle(const AnalyticScene& scene, double thickness,
                                       double t_near, double t_far) {
    RadianceFieldOracle o;
    o.t_near = t_near;
    o.t_far = t_far;
    AnalyticScene copy = scene;
    o.sigma = [copy, thickness](const Vec3& p) {
        double total = 0;
        for (const auto& rect : copy.rects) {
            if (std::abs(p.z - rect.z) > thickness / 2) continue;
            if (p.x < rect.s_min || p.x > rect.s_max || p.y < rect.t_min ||
                p.y > rect.t_max)
                continue;
            const double depth = rect.opacity >= 1.0 ? 20.0 : -std::log(1.0 - rect.opacity);
            total += depth / thickness;
        }
        return total;
    };
    o.emission = [copy, thickness](const Vec3& p, const Vec3&) -> Rgb {
        for (const auto& rect : copy.rects) {
            if (std::abs(p.z - rect.z) > thickness / 2) continue;
            if (p.x < rect.s_min || p.x > rect.s_max || p.y < rect.t_min ||
                p.y > rect.t_max)
                continue;
            return rect.shade(p.x, p.y);
        }
        return {};
    };
    return o;
}

// ---------------------------------------------------------------------------
// Datasets: a rows x cols camera grid, one image per view, with a stride
// holdout split.

struct DatasetView {
    GridCamera camera;
    bool holdout = false;
    std::string image_file;  // relative path recorded in the manifest
};

struct LightFieldDataset {
    int grid_rows = 0, grid_cols = 0;
    TwoPlaneParam param;       // chart used for training coordinates
    double camera_extent = 0.25;  // camera positions span [-extent, extent]
    double pixel_extent = 1.0;    // pixel window on pi_uv spans [-extent, extent]
    int holdout_every = 8;
    std::vector<DatasetView> views;
    std::vector<Image> images;

    int image_width() const { return views.empty() ? 0 : views[0].camera.width; }
    int image_height() const { return views.empty() ? 0 : views[0].camera.height; }

    std::vector<int> split_indices(bool holdout) const {
        std::vector<int> idx;
        for (int i = 0; i < int(views.size()); ++i)
            if (views[i].holdout == holdout) idx.push_back(i);
        return idx;
    }

    Ray pixel_ray(int view, int x, int y) const {
        return views[std::size_t(view)].camera.pixel_ray(x, y);
    }
    Rgb pixel_color(int view, int x, int y) const {
        return images[std::size_t(view)].at(x, y);
    }
};

inline double grid_position(int i, int count, double extent) {
    if (count == 1) return 0.0;
    return -extent + 2.0 * extent * i / (count - 1);
}

inline LightFieldDataset generate_grid_dataset(const AnalyticScene& scene, int grid_rows,
                                               int grid_cols, int image_w, int image_h,
                                               const TwoPlaneParam& param,
                                               int holdout_every,
                                               double camera_extent = 0.25,
                                               double pixel_extent = 1.0) {
    LightFieldDataset ds;
    ds.grid_rows = grid_rows;
    ds.grid_cols = grid_cols;
    ds.param = param;
    ds.camera_extent = camera_extent;
    ds.pixel_extent = pixel_extent;
    ds.holdout_every = holdout_every;
    for (int row = 0; row < grid_rows; ++row) {
        for (int col = 0; col < grid_cols; ++col) {
            const int i = row * grid_cols + col;
            DatasetView view;
            view.camera.position = {grid_position(col, grid_cols, camera_extent),
                                    grid_position(row, grid_rows, camera_extent),
                                    param.z_xy};
            view.camera.param = param;
            view.camera.u_min = -pixel_extent;
            view.camera.u_max = pixel_extent;
            view.camera.v_min = -pixel_extent;
            view.camera.v_max = pixel_extent;
            view.camera.width = image_w;
            view.camera.height = image_h;
            view.holdout = holdout_every > 0 && (i + 1) % holdout_every == 0;
            view.image_file = "view_" + std::to_string(i) + ".png";

            Image img(image_w, image_h);
            for (int y = 0; y < image_h; ++y)
                for (int x = 0; x < image_w; ++x) {
                    const Ray ray = view.camera.pixel_ray(x, y);
                    img.at(x, y) = analytic_lightfield(scene, to_two_plane(ray, param), param);
                }
            ds.views.push_back(std::move(view));
            ds.images.push_back(std::move(img));
        }
    }
    return ds;
}

// Moves the pi_uv chart plane; world rays and stored colors are untouched.
inline LightFieldDataset reparameterize_dataset(const LightFieldDataset& ds,
                                                double new_z_uv) {
    if (new_z_uv == ds.param.z_xy) throw ParallelRay("new z_uv coincides with z_xy");
    for (const auto& view : ds.views)  // surfaces ParallelRay for degenerate views
        (void)intersect_ray_plane(view.camera.pixel_ray(0, 0), new_z_uv);
    LightFieldDataset out = ds;
    out.param.z_uv = new_z_uv;
    return out;
}

}  // namespace nlf
