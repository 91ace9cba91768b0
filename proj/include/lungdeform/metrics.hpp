#pragma once

#include <span>
#include <string>
#include <vector>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

// Evaluation summary for a predicted or registered deflated state.
struct MetricsReport {
    double md_mm = 0.0;
    double hd_mm = 0.0;
    std::vector<double> tre_mm;      // one entry per landmark, never averaged away
    double volume_change_ratio = 1.0; // deflated / inflated
};

// Symmetric vertex-to-surface mean distance:
// 0.5 * (mean_{v in a} dist(v, b) + mean_{v in b} dist(v, a)).
double mean_distance(const SurfaceMesh& a, const SurfaceMesh& b);

// Vertex-sampled symmetric Hausdorff distance.
double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b);

// Per-landmark Euclidean distances.
std::vector<double> target_registration_error(std::span<const Point3> predicted,
                                              std::span<const Point3> truth);

// mesh_volume(deflated) / mesh_volume(inflated).
double volume_change_ratio(const SurfaceMesh& inflated, const SurfaceMesh& deflated);

// Both directed vertex-to-surface distance lists, computed once for MD and HD.
struct DirectedDistances {
    std::vector<double> a_to_b;
    std::vector<double> b_to_a;
};
DirectedDistances directed_distances(const SurfaceMesh& a, const SurfaceMesh& b);

// MD/HD of `predicted` against `truth`, TRE of landmarks, and the volume
// ratio predicted / inflated.
MetricsReport evaluate(const SurfaceMesh& inflated, const SurfaceMesh& predicted,
                       const SurfaceMesh& truth, std::span<const Point3> predicted_landmarks,
                       std::span<const Point3> true_landmarks);

// Flat JSON object with keys md_mm, hd_mm, tre_mm, volume_change_ratio.
std::string to_json(const MetricsReport& report);

} // namespace lungdeform
