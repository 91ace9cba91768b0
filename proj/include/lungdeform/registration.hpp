#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lungdeform/closest_point.hpp"
#include "lungdeform/errors.hpp"
#include "lungdeform/mesh.hpp"
#include "lungdeform/metrics.hpp"

namespace lungdeform {

using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

VertexMatrix to_matrix(const DisplacementField& field);
VertexMatrix to_matrix(const std::vector<Point3>& points);
DisplacementField to_field(const VertexMatrix& m);

// Fixed attachment of a point to a source triangle. Captured once so the
// transported position is linear (hence differentiable) in vertex motion.
struct SurfaceAnchor {
    int nearest_vertex = -1;
    int triangle = -1;
    Vec3 barycentric = Vec3::Zero();
};

// A surgical clip seen in both states.
struct LandmarkPair {
    Point3 source_pos = Point3::Zero();
    Point3 target_pos = Point3::Zero();
    SurfaceAnchor source_anchor;
};

// Anchors source_pos on `source`. Clips sit on the lung surface, so a
// source_pos farther than 1e-3 mm from the surface is a ValidationError.
LandmarkPair make_landmark(const SurfaceMesh& source, const Point3& source_pos,
                           const Point3& target_pos);

// Position of a landmark's anchor on a mesh sharing the source connectivity.
Point3 transport(const SurfaceAnchor& anchor, const SurfaceMesh& mesh);

struct RegistrationParams {
    double clip_weight = 1.0;      // omega; 0 disables the clip term
    double laplacian_weight = 1.0; // mu
    int max_iterations = 300;
    double convergence_tol = 1e-6; // relative energy decrease
    // Line search.
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
    int max_backtracks = 40;
    // Distances below this floor (mm) are clamped when forming the
    // preconditioner weights 1/d.
    double distance_floor = 1e-9;

    void validate() const;
};

struct EnergyTerms {
    double total = 0.0;
    double shape = 0.0;
    double clip = 0.0;
    double laplacian = 0.0;
};

struct EnergyRecord {
    int iteration = 0;
    EnergyTerms energy;
};

struct RegistrationResult {
    SurfaceMesh source;
    SurfaceMesh deformed;
    DisplacementField displacement;
    std::vector<EnergyRecord> energy_trace;
    bool converged = false;
    MetricsReport metrics;
};

// Thrown when an iterate produces a non-finite energy; carries the trace so far.
class DivergedError : public NumericalError {
public:
    DivergedError(const std::string& what, std::vector<EnergyRecord> trace)
        : NumericalError(what), trace_(std::move(trace))
    {
    }
    const std::vector<EnergyRecord>& trace() const { return trace_; }

private:
    std::vector<EnergyRecord> trace_;
};

// Registration energy of a source mesh displaced by u against a target:
//   shape      = mean_distance(target, source + u)
//   clip       = omega * sum_k |anchor_k(source + u) - target_k|
//   laplacian  = mu / V * sum_i |delta_i(source + u) - delta_i(source)|^2
//
// Holds the pieces that stay fixed during one registration (target BVH,
// Laplacian operator, source Laplacian coordinates).
class RegistrationProblem {
public:
    RegistrationProblem(SurfaceMesh source, SurfaceMesh target, std::vector<LandmarkPair> clips,
                        RegistrationParams params);

    // Closest-point correspondences and gradient at one iterate.
    struct Linearization {
        VertexMatrix displacement;
        EnergyTerms energy;
        VertexMatrix gradient;
        // deformed vertex -> closest target point
        std::vector<Point3> forward_targets;
        std::vector<double> forward_distance;
        std::vector<Vec3> forward_normal;
        // target vertex -> closest deformed-surface location
        std::vector<int> reverse_triangle;
        std::vector<Vec3> reverse_barycentric;
        std::vector<double> reverse_distance;
        std::vector<Vec3> reverse_normal;
        std::vector<double> clip_distance;
    };

    EnergyTerms energy(const VertexMatrix& u) const;
    Linearization linearize(const VertexMatrix& u) const;
    // Energy with the correspondences of `lin` held fixed. Equals energy()
    // at lin.displacement and bounds it from above elsewhere.
    EnergyTerms frozen_energy(const Linearization& lin, const VertexMatrix& u) const;
    // Preconditioned descent direction -H^{-1} g. H weights each surface
    // residual along its normal only (point-to-plane), so vertices can slide
    // tangentially under the Laplacian term.
    VertexMatrix descent_direction(const Linearization& lin) const;

    const RegistrationParams& params() const { return params_; }

private:
    double laplacian_energy(const VertexMatrix& u, VertexMatrix* gradient) const;

    SurfaceMesh source_;
    SurfaceMesh target_;
    std::vector<LandmarkPair> clips_;
    RegistrationParams params_;
    VertexMatrix source_positions_;
    std::shared_ptr<const TriangleBvh> target_bvh_;
    Eigen::SparseMatrix<double> laplacian_;
    VertexMatrix source_delta_;
};

EnergyTerms registration_energy(const SurfaceMesh& source, const DisplacementField& u,
                                const SurfaceMesh& target, const std::vector<LandmarkPair>& clips,
                                const RegistrationParams& params);

// Minimizes the registration energy by preconditioned descent with
// backtracking. Correspondences are refreshed every iteration and frozen
// inside the line search, so the recorded energy never increases.
RegistrationResult register_meshes(const SurfaceMesh& source, const SurfaceMesh& target,
                                   const std::vector<LandmarkPair>& clips,
                                   const RegistrationParams& params);

// deformed - source per vertex; vertex identity is the correspondence.
DisplacementField correspondence_displacements(const RegistrationResult& result);

} // namespace lungdeform
