#include "lungdeform/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "lungdeform/closest_point.hpp"
#include "lungdeform/errors.hpp"
#include "lungdeform/rng.hpp"

namespace lungdeform {

SurfaceMesh geodesic_sphere(int frequency)
{
    if (frequency < 1) {
        throw ValidationError("geodesic sphere frequency must be >= 1");
    }
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    const std::array<Point3, 12> ico = {
        Point3(-1, t, 0), Point3(1, t, 0),  Point3(-1, -t, 0), Point3(1, -t, 0),
        Point3(0, -1, t), Point3(0, 1, t),  Point3(0, -1, -t), Point3(0, 1, -t),
        Point3(t, 0, -1), Point3(t, 0, 1),  Point3(-t, 0, -1), Point3(-t, 0, 1)};
    const std::array<Triangle, 20> faces = {{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10},
                                             {0, 10, 11}, {1, 5, 9}, {5, 11, 4},  {11, 10, 2},
                                             {10, 7, 6}, {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
                                             {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},
                                             {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}}};

    // A grid point is identified by its integer weights on icosahedron
    // corners, so points on shared edges dedupe exactly.
    using Key = std::array<std::pair<int, int>, 3>;
    std::map<Key, int> index_of;
    std::vector<Point3> vertices;
    const int f = frequency;

    auto vertex_id = [&](const Triangle& face, int i, int j) {
        std::array<std::pair<int, int>, 3> w = {
            {{face[0], f - i - j}, {face[1], i}, {face[2], j}}};
        Key key{};
        int used = 0;
        std::sort(w.begin(), w.end());
        for (const auto& e : w) {
            if (e.second != 0) key[used++] = e;
        }
        for (int k = used; k < 3; ++k) key[k] = {-1, 0};
        auto [it, inserted] = index_of.try_emplace(key, static_cast<int>(vertices.size()));
        if (inserted) {
            Point3 p = Point3::Zero();
            for (const auto& e : w) p += (static_cast<double>(e.second) / f) * ico[e.first];
            vertices.push_back(p.normalized());
        }
        return it->second;
    };

    std::vector<Triangle> tris;
    tris.reserve(20 * f * f);
    for (const auto& face : faces) {
        for (int i = 0; i < f; ++i) {
            for (int j = 0; i + j < f; ++j) {
                tris.push_back({vertex_id(face, i, j), vertex_id(face, i + 1, j),
                                vertex_id(face, i, j + 1)});
                if (i + j < f - 1) {
                    tris.push_back({vertex_id(face, i + 1, j), vertex_id(face, i + 1, j + 1),
                                    vertex_id(face, i, j + 1)});
                }
            }
        }
    }
    return SurfaceMesh(std::move(vertices), std::move(tris));
}

LungShape sample_lung_shape(std::uint64_t seed)
{
    SplitMix64 rng(seed);
    LungShape shape;
    for (int k = 0; k < 3; ++k) {
        shape.semi_axes[k] *= rng.uniform(0.92, 1.08);
    }
    constexpr int kWaves = 6;
    for (int k = 0; k < kWaves; ++k) {
        LungShape::Wave w;
        // Uniform direction on the sphere.
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        w.direction = Vec3(rxy * std::cos(phi), rxy * std::sin(phi), z);
        w.frequency = rng.uniform(1.0, 3.0);
        w.amplitude = rng.uniform(0.01, 0.035);
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        shape.waves.push_back(w);
    }
    return shape;
}

namespace {

int frequency_for_budget(int vertex_budget)
{
    if (vertex_budget < 100) {
        throw ValidationError("vertex_budget must be >= 100");
    }
    const double f = std::sqrt((vertex_budget - 2) / 10.0);
    return std::max(1, static_cast<int>(std::lround(f)));
}

} // namespace

SurfaceMesh build_lung_mesh(const LungShape& shape, int vertex_budget)
{
    const SurfaceMesh sphere = geodesic_sphere(frequency_for_budget(vertex_budget));
    std::vector<Point3> pts(sphere.vertex_count());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3& dir = sphere.vertex(i);
        double r = 1.0;
        for (const auto& w : shape.waves) {
            r += w.amplitude * std::cos(w.frequency * dir.dot(w.direction) + w.phase);
        }
        pts[i] = shape.center + r * shape.semi_axes.cwiseProduct(dir);
    }
    return sphere.with_vertices(std::move(pts));
}

SurfaceMesh generate_lung_like_mesh(std::uint64_t case_seed, int vertex_budget)
{
    return build_lung_mesh(sample_lung_shape(case_seed), vertex_budget);
}

DeflationMap::DeflationMap(const SurfaceMesh& inflated, const DeflationParams& params)
    : params_(params)
{
    if (!(params.contraction_ratio > 0.0) || !std::isfinite(params.contraction_ratio)) {
        throw ValidationError("contraction_ratio must be > 0");
    }
    if (!std::isfinite(params.rotation_deg) || !std::isfinite(params.sag_mm) ||
        !is_finite(params.hilum_point)) {
        throw ValidationError("non-finite deflation parameter");
    }
    const Point3 lo = inflated.bbox_min();
    const Point3 hi = inflated.bbox_max();
    if ((params.hilum_point.array() < lo.array()).any() ||
        (params.hilum_point.array() > hi.array()).any()) {
        throw ValidationError("hilum_point lies outside the mesh bounding box");
    }
    s_perp_ = std::pow(params.contraction_ratio, 0.4);
    s_axial_ = std::pow(params.contraction_ratio, 0.2);
    half_height_ = 0.5 * (hi.z() - lo.z());
}

Vec3 DeflationMap::displacement(const Point3& p) const
{
    const Point3& h = params_.hilum_point;

    // Every stage is written as a displacement so identity parameters give
    // an exactly zero field.
    const Vec3 rel0 = p - h;
    const Vec3 d1((s_perp_ - 1.0) * rel0.x(), (s_perp_ - 1.0) * rel0.y(),
                  (s_axial_ - 1.0) * rel0.z());

    const Vec3 rel1 = rel0 + d1;
    const double theta = params_.rotation_deg * std::numbers::pi / 180.0;
    const double half_sin = std::sin(0.5 * theta);
    const double cm1 = -2.0 * half_sin * half_sin; // cos(theta) - 1
    const double s = std::sin(theta);
    const Vec3 d2(cm1 * rel1.x() - s * rel1.y(), s * rel1.x() + cm1 * rel1.y(), 0.0);

    const double t = (rel1.z() + d2.z()) / half_height_;
    const Vec3 d3(0.0, -params_.sag_mm * t * t, 0.0);

    return d1 + d2 + d3;
}

Point3 default_hilum(const SurfaceMesh& inflated)
{
    const Point3 lo = inflated.bbox_min();
    const Point3 hi = inflated.bbox_max();
    const Point3 c = 0.5 * (lo + hi);
    return Point3(c.x() - 0.25 * (hi.x() - lo.x()), c.y(), c.z());
}

SyntheticCase apply_deflation(const SurfaceMesh& inflated, const DeflationParams& params)
{
    const DeflationMap map(inflated, params);
    SyntheticCase out;
    out.params = params;
    out.inflated = inflated;

    std::vector<Vec3> field(inflated.vertex_count());
    for (std::size_t i = 0; i < field.size(); ++i) {
        field[i] = map.displacement(inflated.vertex(i));
    }
    out.truth_field = DisplacementField(std::move(field));
    out.deflated = apply_displacement(inflated, out.truth_field);

    SplitMix64 rng(mix_seed(params.seed, 0xC11F));
    const auto n = inflated.vertex_count();
    const Point3 center = 0.5 * (inflated.bbox_min() + inflated.bbox_max());
    const double min_sep = 0.25 * inflated.bounding_diameter();

    // First clip on the lateral half, second far enough from it.
    std::size_t first = rng.below(n);
    for (int tries = 0; tries < 1000 && inflated.vertex(first).x() < center.x(); ++tries) {
        first = rng.below(n);
    }
    std::size_t second = n;
    for (int tries = 0; tries < 1000; ++tries) {
        const std::size_t c = rng.below(n);
        if ((inflated.vertex(c) - inflated.vertex(first)).norm() >= min_sep) {
            second = c;
            break;
        }
    }
    if (second == n) {
        second = 0;
        for (std::size_t c = 1; c < n; ++c) {
            if ((inflated.vertex(c) - inflated.vertex(first)).norm() >
                (inflated.vertex(second) - inflated.vertex(first)).norm()) {
                second = c;
            }
        }
    }
    for (std::size_t k : {first, second}) {
        out.clips.push_back(make_landmark(inflated, inflated.vertex(k), out.deflated.vertex(k)));
    }

    // Nodule: a small cluster halfway between the center and a surface vertex.
    constexpr int kNodulePoints = 12;
    constexpr double kNoduleRadius = 4.0;
    const Point3 nodule = center + 0.5 * (inflated.vertex(rng.below(n)) - center);
    for (int k = 0; k < kNodulePoints; ++k) {
        Vec3 offset;
        do {
            offset = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        } while (offset.squaredNorm() > 1.0);
        const Point3 p = nodule + kNoduleRadius * offset;
        out.interior.points.push_back(p);
        out.interior_deflated.push_back(map(p));
    }
    return out;
}

std::vector<SyntheticCase> make_dataset(int n_cases, std::uint64_t base_seed,
                                        const DatasetRanges& ranges, int vertex_budget)
{
    if (n_cases < 1) {
        throw ValidationError("n_cases must be >= 1");
    }
    for (const ParamRange* r : {&ranges.contraction_ratio, &ranges.rotation_deg, &ranges.sag_mm}) {
        if (!std::isfinite(r->lo) || !std::isfinite(r->hi) || r->lo > r->hi) {
            throw ValidationError("empty parameter range");
        }
    }
    if (ranges.contraction_ratio.lo <= 0.0) {
        throw ValidationError("contraction_ratio range must be positive");
    }

    std::vector<SyntheticCase> cases;
    cases.reserve(static_cast<std::size_t>(n_cases));
    for (int i = 0; i < n_cases; ++i) {
        const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(i));
        SplitMix64 rng(seed);
        const double u_ratio = rng.uniform();
        const double u_rot = rng.uniform();
        const double u_sag = rng.uniform();

        LungShape shape = sample_lung_shape(mix_seed(seed, 1));
        const Vec3 base = LungShape{}.semi_axes;
        shape.semi_axes = Vec3(base.x() * (0.9 + 0.2 * (1.0 - u_ratio)),
                               base.y() * (0.9 + 0.2 * u_sag), base.z() * (0.9 + 0.2 * u_rot));
        const SurfaceMesh mesh = build_lung_mesh(shape, vertex_budget);

        DeflationParams p;
        p.contraction_ratio = ranges.contraction_ratio.lo +
                              u_ratio * (ranges.contraction_ratio.hi - ranges.contraction_ratio.lo);
        p.rotation_deg = ranges.rotation_deg.lo + u_rot * (ranges.rotation_deg.hi - ranges.rotation_deg.lo);
        p.sag_mm = ranges.sag_mm.lo + u_sag * (ranges.sag_mm.hi - ranges.sag_mm.lo);
        p.hilum_point = default_hilum(mesh);
        p.seed = seed;

        SyntheticCase c = apply_deflation(mesh, p);
        char id[32];
        std::snprintf(id, sizeof(id), "case_%02d", i);
        c.id = id;
        cases.push_back(std::move(c));
    }
    return cases;
}

} // namespace lungdeform
