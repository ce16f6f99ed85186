#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "nlf/common.hpp"
#include "nlf/image.hpp"
#include "nlf/model.hpp"
#include "nlf/scenes.hpp"

namespace nlf {

constexpr double kPsnrCap = 99.0;

inline double mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw DimensionMismatch();
    double acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            const double d = a.pixels[i][k] - b.pixels[i][k];
            acc += d * d;
        }
    return acc / (3.0 * a.pixels.size());
}

inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

// Mean local SSIM over valid 11x11 windows (Gaussian sigma 1.5, K1 = 0.01,
// K2 = 0.03), averaged over channels.
inline double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw DimensionMismatch();
    constexpr int W = 11;
    if (a.width < W || a.height < W) throw TooSmall();

    static const auto kernel = [] {
        std::array<double, W * W> k{};
        const double sigma = 1.5;
        double sum = 0;
        for (int y = 0; y < W; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = x - W / 2, dy = y - W / 2;
                k[y * W + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += k[y * W + x];
            }
        for (auto& v : k) v /= sum;
        return k;
    }();

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    long count = 0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y + W <= a.height; ++y) {
            for (int x = 0; x + W <= a.width; ++x) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int j = 0; j < W; ++j)
                    for (int i = 0; i < W; ++i) {
                        const double w = kernel[j * W + i];
                        const double pa = a.at(x + i, y + j)[ch];
                        const double pb = b.at(x + i, y + j)[ch];
                        mu_a += w * pa;
                        mu_b += w * pb;
                        aa += w * pa * pa;
                        bb += w * pb * pb;
                        ab += w * pa * pb;
                    }
                const double va = aa - mu_a * mu_a;
                const double vb = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / count;
}

struct MetricsReport {
    std::vector<int> view_indices;
    std::vector<double> view_psnr;
    std::vector<double> view_ssim;
    double mean_psnr = 0;
    double mean_ssim = 0;
    // LPIPS needs a pretrained perceptual network; reported as unavailable.
    bool lpips_available = false;
};

// ---------------------------------------------------------------------------
// Embedding PCA visualization (first three principal components -> RGB).

struct PcaImageResult {
    Image image;
    bool constant_embedding = false;  // zero-variance warning
};

template <typename T>
inline PcaImageResult embedding_pca_image(const LightFieldModel<T>& model,
                                          const GridCamera& camera) {
    if (model.kind == EmbeddingKind::none)
        throw ShapeMismatch("embedding_pca_image: model has no embedding");
    const int W = camera.width, H = camera.height, N = model.latent_dim;

    Eigen::MatrixXd emb(W * H, N);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const Ray ray = camera.pixel_ray(x, y);
            std::vector<Ray> one{ray};
            ModelCache<T> c = prepare_batch(model, one, /*training=*/false);
            // for subdivided models visualize the first traversed voxel
            if (c.raw_r.rows() == 0) {
                emb.row(y * W + x).setZero();
                continue;
            }
            model_forward_samples(model, c);
            for (int k = 0; k < N; ++k) emb(y * W + x, k) = double(c.latent(0, k));
        }

    const Eigen::RowVectorXd mean = emb.colwise().mean();
    Eigen::MatrixXd centered = emb.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(emb.rows());

    PcaImageResult res;
    res.image = Image(W, H, {0.5, 0.5, 0.5});
    if (cov.trace() < 1e-24) {
        res.constant_embedding = true;
        return res;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // eigenvalues ascending; take the top three
    for (int comp = 0; comp < 3 && comp < N; ++comp) {
        Eigen::VectorXd axis = eig.eigenvectors().col(N - 1 - comp);
        // sign convention: largest-magnitude loading positive
        int arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0) axis = -axis;
        Eigen::VectorXd proj = centered * axis;
        const double lo = proj.minCoeff(), hi = proj.maxCoeff();
        const double span = hi - lo;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                res.image.at(x, y)[comp] =
                    span < 1e-12 ? 0.5 : (proj(y * W + x) - lo) / span;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Epipolar-plane images: one camera-plane coordinate against one image-plane
// coordinate, the other two held fixed.

enum class EpiAxis { ux, vy };  // which (camera, image) coordinate pair varies

struct EpiSpec {
    EpiAxis axis = EpiAxis::ux;
    double fixed_cam = 0;    // the held camera-plane coordinate (y for ux, x for vy)
    double fixed_img = 0;    // the held image-plane coordinate (v for ux, u for vy)
    int cam_steps = 64;      // rows: samples along the camera axis
    int img_steps = 64;      // cols: samples along the image axis
    double cam_extent = 0.25;
    double img_extent = 1.0;
};

inline RayCoords4D epi_coords(const EpiSpec& spec, int row, int col) {
    const double cam = spec.cam_steps == 1
                           ? 0.0
                           : -spec.cam_extent + 2.0 * spec.cam_extent * row / (spec.cam_steps - 1);
    const double img = spec.img_steps == 1
                           ? 0.0
                           : -spec.img_extent + 2.0 * spec.img_extent * col / (spec.img_steps - 1);
    if (spec.axis == EpiAxis::ux) return {cam, spec.fixed_cam, img, spec.fixed_img};
    return {spec.fixed_cam, cam, spec.fixed_img, img};
}

template <typename ColorFn>
inline Image epi_slice_from(const EpiSpec& spec, ColorFn&& color_of) {
    Image img(spec.img_steps, spec.cam_steps);
    for (int row = 0; row < spec.cam_steps; ++row)
        for (int col = 0; col < spec.img_steps; ++col)
            img.at(col, row) = color_of(epi_coords(spec, row, col));
    return img;
}

inline Image epi_slice(const AnalyticScene& scene, const TwoPlaneParam& param,
                       const EpiSpec& spec) {
    return epi_slice_from(spec, [&](const RayCoords4D& r) {
        return analytic_lightfield(scene, r, param);
    });
}

template <typename T>
inline Image epi_slice(const LightFieldModel<T>& model, const EpiSpec& spec) {
    return epi_slice_from(spec, [&](const RayCoords4D& r) {
        if (model.subdivided) {
            RenderStats stats;
            return render_ray(model, from_two_plane(r, model.param), &stats);
        }
        return lf_forward(model, r);
    });
}

// Resamples a dataset's camera grid into an EPI; camera rows are the grid
// views nearest the requested camera coordinates.
inline Image epi_slice(const LightFieldDataset& ds, const EpiSpec& spec) {
    if (ds.views.empty()) throw OutOfRange("empty dataset");
    const int W = ds.image_width(), H = ds.image_height();
    Image img(spec.img_steps, spec.cam_steps);
    for (int row = 0; row < spec.cam_steps; ++row) {
        for (int col = 0; col < spec.img_steps; ++col) {
            const RayCoords4D r = epi_coords(spec, row, col);
            // nearest view by camera position, nearest pixel by (u, v)
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int i = 0; i < int(ds.views.size()); ++i) {
                const auto& p = ds.views[i].camera.position;
                const double d = (p.x - r.x) * (p.x - r.x) + (p.y - r.y) * (p.y - r.y);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            const auto& cam = ds.views[best].camera;
            const int px = std::clamp(
                int((r.u - cam.u_min) / (cam.u_max - cam.u_min) * W), 0, W - 1);
            const int py = std::clamp(
                int((r.v - cam.v_min) / (cam.v_max - cam.v_min) * H), 0, H - 1);
            img.at(col, row) = ds.images[best].at(px, py);
        }
    }
    return img;
}

}  // namespace nlf
