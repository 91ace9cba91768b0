#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lungdeform/mesh.hpp"
#include "lungdeform/registration.hpp"

namespace lungdeform {

// Geodesic sphere: icosahedron faces split into frequency^2 triangles and
// projected to the unit sphere. 10 f^2 + 2 vertices, outward orientation.
SurfaceMesh geodesic_sphere(int frequency);

// Shape of a synthetic lung: an ellipsoid (z is craniocaudal) times a
// band-limited radial perturbation 1 + sum_k a_k cos(w_k (dir . n_k) + phi_k).
struct LungShape {
    Vec3 semi_axes = Vec3(52.0, 44.0, 78.0); // mm
    Point3 center = Point3::Zero();
    struct Wave {
        Vec3 direction = Vec3::UnitX();
        double frequency = 1.0;
        double amplitude = 0.0;
        double phase = 0.0;
    };
    std::vector<Wave> waves;
};

LungShape sample_lung_shape(std::uint64_t seed);
SurfaceMesh build_lung_mesh(const LungShape& shape, int vertex_budget);

// Closed, outward-oriented lung-like surface. Deterministic in case_seed.
// vertex_budget must be >= 100; the count is the closest 10 f^2 + 2.
SurfaceMesh generate_lung_like_mesh(std::uint64_t case_seed, int vertex_budget = 500);

// Pneumothorax-style deflation. Stages, applied in this order:
//   1. contraction toward the hilum: scale s_perp = r^0.4 across the hilum
//      axis and s_axial = r^0.2 along it, so the volume ratio is exactly r;
//   2. rotation by rotation_deg about the hilum axis (z through hilum_point);
//   3. gravity sag along -y: sag_mm * ((z - z_hilum) / half_height)^2, where
//      half_height is half the inflated mesh's z extent.
// Rotation and sag preserve volume.
struct DeflationParams {
    double contraction_ratio = 1.0;
    double rotation_deg = 0.0;
    double sag_mm = 0.0;
    Point3 hilum_point = Point3::Zero();
    std::uint64_t seed = 0;
};

// The analytic deflation map, as a displacement of point p.
class DeflationMap {
public:
    DeflationMap(const SurfaceMesh& inflated, const DeflationParams& params);
    Vec3 displacement(const Point3& p) const;
    Point3 operator()(const Point3& p) const { return p + displacement(p); }

private:
    DeflationParams params_;
    double s_perp_ = 1.0;
    double s_axial_ = 1.0;
    double half_height_ = 1.0;
};

struct SyntheticCase {
    std::string id;
    SurfaceMesh inflated;
    SurfaceMesh deflated;
    DisplacementField truth_field;
    std::vector<LandmarkPair> clips; // exactly two
    InteriorPointSet interior;
    std::vector<Point3> interior_deflated;
    DeflationParams params;
};

// Default hilum for a shape: on the medial side, halfway to the surface.
Point3 default_hilum(const SurfaceMesh& inflated);

SyntheticCase apply_deflation(const SurfaceMesh& inflated, const DeflationParams& params);

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct DatasetRanges {
    ParamRange contraction_ratio{0.3, 0.6};
    ParamRange rotation_deg{5.0, 25.0};
    ParamRange sag_mm{2.0, 10.0};
};

// n_cases independent cases, deterministic in base_seed. Each case draws
// u ~ U[0,1]^3 and maps it linearly onto the three ranges; the same u also
// sets the lung's semi-axes (lateral width <- contraction, height <-
// rotation, depth <- sag), so deflation is predictable from shape up to the
// seed-specific surface waves.
std::vector<SyntheticCase> make_dataset(int n_cases, std::uint64_t base_seed,
                                        const DatasetRanges& ranges = {}, int vertex_budget = 500);

} // namespace lungdeform
