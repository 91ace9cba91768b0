#pragma once

#include <span>

#include <Eigen/Core>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    Point3 apply(const Point3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
};

struct RigidAlignment {
    RigidTransform transform;
    SurfaceMesh aligned;
};

// Least-squares rotation and translation (no scaling) taking
// moving_landmarks onto fixed_landmarks (Kabsch). The rotation is proper,
// det = +1. Throws ValidationError "degenerate landmark configuration" for
// fewer than 3 pairs or collinear landmarks.
RigidTransform fit_rigid(std::span<const Point3> fixed_landmarks,
                         std::span<const Point3> moving_landmarks);

// fit_rigid, then applied to every vertex of `moving`.
RigidAlignment rigid_align(const SurfaceMesh& moving, std::span<const Point3> fixed_landmarks,
                           std::span<const Point3> moving_landmarks);

SurfaceMesh transform_mesh(const SurfaceMesh& mesh, const RigidTransform& t);

} // namespace lungdeform
