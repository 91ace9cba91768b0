#include "lungdeform/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "lungdeform/errors.hpp"

namespace lungdeform {

namespace {

void validate_vertices(const std::vector<Point3>& vertices)
{
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (!is_finite(vertices[i])) {
            throw ValidationError("non-finite coordinate at vertex " + std::to_string(i));
        }
    }
}

void validate_triangles(const std::vector<Point3>& vertices, const std::vector<Triangle>& triangles)
{
    const auto n = static_cast<long long>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        const auto& tri = triangles[t];
        for (int idx : tri) {
            if (idx < 0 || idx >= n) {
                throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                                      std::to_string(idx) + " out of range");
            }
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
            throw ValidationError("degenerate triangle " + std::to_string(t) + ": repeated index");
        }
        const Vec3 e1 = vertices[tri[1]] - vertices[tri[0]];
        const Vec3 e2 = vertices[tri[2]] - vertices[tri[0]];
        const double area = 0.5 * e1.cross(e2).norm();
        if (!(area > kMinTriangleArea)) {
            throw ValidationError("degenerate triangle " + std::to_string(t) + ": area " +
                                  std::to_string(area) + " mm^2");
        }
    }
}

} // namespace

SurfaceMesh::SurfaceMesh(std::vector<Point3> vertices, std::vector<Triangle> triangles,
                         std::vector<int> labels)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), labels_(std::move(labels))
{
    validate_vertices(vertices_);
    validate_triangles(vertices_, triangles_);
    if (!labels_.empty() && labels_.size() != vertices_.size()) {
        throw ValidationError("label count " + std::to_string(labels_.size()) +
                              " does not match vertex count " + std::to_string(vertices_.size()));
    }
}

SurfaceMesh SurfaceMesh::with_vertices(std::vector<Point3> vertices) const
{
    if (vertices.size() != vertices_.size()) {
        throw ValidationError("vertex count mismatch in with_vertices");
    }
    return SurfaceMesh(std::move(vertices), triangles_, labels_);
}

Point3 SurfaceMesh::bbox_min() const
{
    Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices_) lo = lo.cwiseMin(v);
    return lo;
}

Point3 SurfaceMesh::bbox_max() const
{
    Point3 hi = Point3::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices_) hi = hi.cwiseMax(v);
    return hi;
}

double SurfaceMesh::bounding_diameter() const
{
    if (vertices_.empty()) return 0.0;
    return (bbox_max() - bbox_min()).norm();
}

DisplacementField::DisplacementField(std::vector<Vec3> vectors) : vectors_(std::move(vectors))
{
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        if (!is_finite(vectors_[i])) {
            throw ValidationError("non-finite displacement at vertex " + std::to_string(i));
        }
    }
}

DisplacementField DisplacementField::zeros(std::size_t n)
{
    return DisplacementField(std::vector<Vec3>(n, Vec3::Zero()));
}

SurfaceMesh apply_displacement(const SurfaceMesh& mesh, const DisplacementField& field)
{
    if (field.size() != mesh.vertex_count()) {
        throw ValidationError("displacement field has " + std::to_string(field.size()) +
                              " vectors, mesh has " + std::to_string(mesh.vertex_count()) +
                              " vertices");
    }
    std::vector<Point3> moved(mesh.vertex_count());
    for (std::size_t i = 0; i < moved.size(); ++i) {
        moved[i] = mesh.vertex(i) + field[i];
    }
    return mesh.with_vertices(std::move(moved));
}

DisplacementField displacement_between(const SurfaceMesh& source, const SurfaceMesh& deformed)
{
    if (source.vertex_count() != deformed.vertex_count()) {
        throw ValidationError("vertex count mismatch: " + std::to_string(source.vertex_count()) +
                              " vs " + std::to_string(deformed.vertex_count()));
    }
    std::vector<Vec3> d(source.vertex_count());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = deformed.vertex(i) - source.vertex(i);
    }
    return DisplacementField(std::move(d));
}

Point3 centroid(std::span<const Point3> points)
{
    Point3 sum = Point3::Zero();
    for (const auto& p : points) sum += p;
    return points.empty() ? sum : Point3(sum / static_cast<double>(points.size()));
}

} // namespace lungdeform
