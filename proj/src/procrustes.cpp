#include "lungdeform/procrustes.hpp"

#include <string>

#include <Eigen/SVD>

#include "lungdeform/errors.hpp"

namespace lungdeform {

RigidTransform RigidTransform::inverse() const
{
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform fit_rigid(std::span<const Point3> fixed_landmarks,
                         std::span<const Point3> moving_landmarks)
{
    if (fixed_landmarks.size() != moving_landmarks.size()) {
        throw ValidationError("landmark count mismatch: " + std::to_string(fixed_landmarks.size()) +
                              " fixed vs " + std::to_string(moving_landmarks.size()) + " moving");
    }
    if (fixed_landmarks.size() < 3) {
        throw ValidationError("degenerate landmark configuration: need at least 3 pairs");
    }
    const Point3 cf = centroid(fixed_landmarks);
    const Point3 cm = centroid(moving_landmarks);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
    for (std::size_t k = 0; k < fixed_landmarks.size(); ++k) {
        const Vec3 m = moving_landmarks[k] - cm;
        cov += (fixed_landmarks[k] - cf) * m.transpose();
        spread += m * m.transpose();
    }
    // Collinear (or coincident) moving landmarks leave rotation about the
    // line undetermined.
    const Eigen::JacobiSVD<Eigen::Matrix3d> spread_svd(spread);
    const Eigen::Vector3d sv = spread_svd.singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0]) {
        throw ValidationError("degenerate landmark configuration");
    }

    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
        d(2, 2) = -1.0;
    }
    RigidTransform t;
    t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    t.translation = cf - t.rotation * cm;
    return t;
}

SurfaceMesh transform_mesh(const SurfaceMesh& mesh, const RigidTransform& t)
{
    std::vector<Point3> pts(mesh.vertex_count());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = t.apply(mesh.vertex(i));
    return mesh.with_vertices(std::move(pts));
}

RigidAlignment rigid_align(const SurfaceMesh& moving, std::span<const Point3> fixed_landmarks,
                           std::span<const Point3> moving_landmarks)
{
    RigidAlignment out{fit_rigid(fixed_landmarks, moving_landmarks), {}};
    out.aligned = transform_mesh(moving, out.transform);
    return out;
}

} // namespace lungdeform
