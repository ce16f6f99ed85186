#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "nlf/common.hpp"

namespace nlf {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length

    Vec3 at(double t) const { return origin + direction * t; }
};

inline Ray make_ray(const Vec3& origin, const Vec3& direction) {
    return Ray{origin, direction.normalized()};
}

// Depths of the two parameterization planes pi_xy and pi_uv.
struct TwoPlaneParam {
    double z_xy = -1.0;
    double z_uv = 0.0;
};

struct RayCoords4D {
    double x = 0, y = 0, u = 0, v = 0;
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : (i == 2 ? u : v)); }
};

struct PlueckerCoords {
    Vec3 direction;  // unit
    Vec3 moment;     // origin x direction
};

constexpr double kParallelEps = 1e-9;

// Intersection of a ray with the constant-z plane, returned as (x, y).
inline std::array<double, 2> intersect_ray_plane(const Ray& ray, double z) {
    if (std::abs(ray.direction.z) <= kParallelEps) throw ParallelRay();
    const double t = (z - ray.origin.z) / ray.direction.z;
    const Vec3 p = ray.at(t);
    return {p.x, p.y};
}

inline RayCoords4D to_two_plane(const Ray& ray, const TwoPlaneParam& param) {
    const auto xy = intersect_ray_plane(ray, param.z_xy);
    const auto uv = intersect_ray_plane(ray, param.z_uv);
    return {xy[0], xy[1], uv[0], uv[1]};
}

// Inverse of to_two_plane: the ray from the pi_xy point toward the pi_uv point.
inline Ray from_two_plane(const RayCoords4D& r, const TwoPlaneParam& param) {
    const Vec3 a{r.x, r.y, param.z_xy};
    const Vec3 b{r.u, r.v, param.z_uv};
    return make_ray(a, b - a);
}

inline PlueckerCoords to_pluecker(const Ray& ray) {
    return {ray.direction, ray.origin.cross(ray.direction)};
}

// Forward-facing NDC warp: shift the origin to the near plane, then apply the
// projective point map. Camera convention looks down -z; focal and image size
// are in pixels.
inline Ray world_to_ndc(const Ray& ray, double focal, double width, double height,
                        double near) {
    if (ray.direction.z >= -kParallelEps) throw BehindNear("ray does not look down -z");
    // advance origin to the z = -near plane
    const double tn = -(near + ray.origin.z) / ray.direction.z;
    const Vec3 o = ray.at(tn);
    if (o.z >= 0) throw BehindNear();
    const Vec3 d = ray.direction;

    const double ax = -focal * 2.0 / width;
    const double ay = -focal * 2.0 / height;

    Vec3 o_ndc{ax * o.x / o.z, ay * o.y / o.z, 1.0 + 2.0 * near / o.z};
    Vec3 d_ndc{ax * (d.x / d.z - o.x / o.z), ay * (d.y / d.z - o.y / o.z),
               -2.0 * near / o.z};
    return Ray{o_ndc, d_ndc.normalized()};
}

// Projective point map matching world_to_ndc, for oracle-style tests.
inline Vec3 ndc_point(const Vec3& p, double focal, double width, double height,
                      double near) {
    return {-focal * 2.0 / width * p.x / p.z, -focal * 2.0 / height * p.y / p.z,
            1.0 + 2.0 * near / p.z};
}

struct VoxelGrid {
    int resolution = 1;  // N voxels per axis
    Vec3 box_min;
    Vec3 box_max;

    int voxel_count() const { return resolution * resolution * resolution; }
    Vec3 voxel_width() const { return (box_max - box_min) / double(resolution); }

    int index_of(int ix, int iy, int iz) const {
        return (iz * resolution + iy) * resolution + ix;
    }
    std::array<int, 3> cell_of(int index) const {
        const int n = resolution;
        return {index % n, (index / n) % n, index / (n * n)};
    }
    Vec3 voxel_min(int index) const {
        const auto c = cell_of(index);
        const Vec3 w = voxel_width();
        return box_min + Vec3{c[0] * w.x, c[1] * w.y, c[2] * w.z};
    }
    Vec3 voxel_center(int index) const {
        return voxel_min(index) + voxel_width() * 0.5;
    }
    // voxel center mapped so the grid box spans [-1, 1] per axis
    Vec3 voxel_center_normalized(int index) const {
        const Vec3 c = voxel_center(index);
        const Vec3 span = box_max - box_min;
        return {2.0 * (c.x - box_min.x) / span.x - 1.0,
                2.0 * (c.y - box_min.y) / span.y - 1.0,
                2.0 * (c.z - box_min.z) / span.z - 1.0};
    }
};

struct VoxelHit {
    int voxel_index = 0;
    double entry_t = 0;
    double exit_t = 0;
};

// Amanatides-Woo style incremental traversal; returns voxels pierced with
// positive segment length, ordered by ascending entry_t. Grazing hits
// (entry_t == exit_t) are excluded.
inline std::vector<VoxelHit> voxels_intersected(const VoxelGrid& grid, const Ray& ray) {
    std::vector<VoxelHit> hits;
    const int n = grid.resolution;
    const Vec3 w = grid.voxel_width();

    // clip ray to the box
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.direction[a];
        const double lo = grid.box_min[a], hi = grid.box_max[a];
        if (std::abs(d) < 1e-15) {
            if (o <= lo || o >= hi) return hits;
        } else {
            double ta = (lo - o) / d, tb = (hi - o) / d;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
    }
    if (!(t0 < t1)) return hits;

    const double eps = 1e-12 * std::max({w.x, w.y, w.z, 1.0});
    double t = t0;
    Vec3 p = ray.at(t0 + eps);
    int cell[3];
    for (int a = 0; a < 3; ++a) {
        double f = (p[a] - grid.box_min[a]) / (a == 0 ? w.x : a == 1 ? w.y : w.z);
        cell[a] = std::clamp(int(std::floor(f)), 0, n - 1);
    }

    while (t < t1 - eps) {
        // exit t of the current cell
        double t_exit = t1;
        int step_axis = -1, step_dir = 0;
        for (int a = 0; a < 3; ++a) {
            const double d = ray.direction[a];
            if (std::abs(d) < 1e-15) continue;
            const double wa = a == 0 ? w.x : a == 1 ? w.y : w.z;
            const int next = d > 0 ? cell[a] + 1 : cell[a];
            const double plane = grid.box_min[a] + next * wa;
            const double tc = (plane - ray.origin[a]) / d;
            if (tc < t_exit) {
                t_exit = tc;
                step_axis = a;
                step_dir = d > 0 ? 1 : -1;
            }
        }
        if (t_exit > t + eps) {
            hits.push_back({grid.index_of(cell[0], cell[1], cell[2]), t, t_exit});
        }
        if (step_axis < 0 || t_exit >= t1 - eps) break;
        cell[step_axis] += step_dir;
        if (cell[step_axis] < 0 || cell[step_axis] >= n) break;
        t = t_exit;
    }
    return hits;
}

// Per-voxel two-plane coordinates in the voxel-centered frame, divided by the
// voxel half-extents so in-voxel intersections land in [-1, 1].
struct LocalRayCoords {
    int voxel_index = 0;
    RayCoords4D coords;
    double entry_t = 0;
    double exit_t = 0;
};

inline LocalRayCoords localize(const VoxelGrid& grid, int voxel_index, const Ray& ray) {
    if (std::abs(ray.direction.z) <= kParallelEps) throw ParallelRay();
    const Vec3 c = grid.voxel_center(voxel_index);
    const Vec3 half = grid.voxel_width() * 0.5;

    const Ray local{ray.origin - c, ray.direction};
    const auto front = intersect_ray_plane(local, -half.z);
    const auto back = intersect_ray_plane(local, half.z);

    // slab-test entry/exit to carry compositing order
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const Vec3 vmin = c - half, vmax = c + half;
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a], d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o < vmin[a] || o > vmax[a]) throw NoIntersection();
        } else {
            double ta = (vmin[a] - o) / d, tb = (vmax[a] - o) / d;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
    }
    if (!(t0 <= t1)) throw NoIntersection();

    return {voxel_index,
            {front[0] / half.x, front[1] / half.y, back[0] / half.x, back[1] / half.y},
            t0, t1};
}

}  // namespace nlf
