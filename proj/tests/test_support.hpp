#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Geometry>

#include "lungdeform/mesh.hpp"
#include "lungdeform/rng.hpp"

namespace lungdeform::testing {

// Unit square in z = 0, two triangles, normal +z.
inline SurfaceMesh unit_square(double z = 0.0)
{
    return SurfaceMesh({{0, 0, z}, {1, 0, z}, {1, 1, z}, {0, 1, z}}, {{{0, 1, 2}}, {{0, 2, 3}}});
}

// Unit cube [0,1]^3, outward orientation.
inline SurfaceMesh unit_cube()
{
    std::vector<Point3> v{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                          {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    std::vector<Triangle> t{{{0, 2, 1}}, {{0, 3, 2}}, {{4, 5, 6}}, {{4, 6, 7}},
                            {{0, 1, 5}}, {{0, 5, 4}}, {{1, 2, 6}}, {{1, 6, 5}},
                            {{2, 3, 7}}, {{2, 7, 6}}, {{3, 0, 4}}, {{3, 4, 7}}};
    return SurfaceMesh(v, t);
}

// (k+1) x (k+1) vertex grid over [0,k]^2 at z = 0.
inline SurfaceMesh flat_grid(int k)
{
    std::vector<Point3> v;
    std::vector<Triangle> t;
    for (int j = 0; j <= k; ++j)
        for (int i = 0; i <= k; ++i) v.emplace_back(i, j, 0.0);
    auto id = [k](int i, int j) { return j * (k + 1) + i; };
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) {
            t.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}});
            t.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}});
        }
    return SurfaceMesh(v, t);
}

inline Eigen::Matrix3d random_rotation(SplitMix64& rng)
{
    Eigen::Quaterniond q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    q.normalize();
    return q.toRotationMatrix();
}

inline Vec3 random_vec(SplitMix64& rng, double scale = 1.0)
{
    return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale));
}

inline SurfaceMesh rigid(const SurfaceMesh& m, const Eigen::Matrix3d& r, const Vec3& t)
{
    std::vector<Point3> v;
    for (const auto& p : m.vertices()) v.push_back(r * p + t);
    return m.with_vertices(std::move(v));
}

// Every vertex moved by an independent uniform offset in [-s, s]^3.
inline SurfaceMesh jitter(const SurfaceMesh& m, SplitMix64& rng, double s)
{
    std::vector<Point3> v;
    for (const auto& p : m.vertices()) v.push_back(p + random_vec(rng, s));
    return m.with_vertices(std::move(v));
}

} // namespace lungdeform::testing
