#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lungdeform {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Triangle = std::array<int, 3>;

inline bool is_finite(const Vec3& v)
{
    return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// Minimum triangle area (mm^2) accepted at construction.
inline constexpr double kMinTriangleArea = 1e-12;

// Indexed triangle mesh in millimeters. Construction validates: finite
// coordinates, in-range indices, three distinct indices per triangle and
// area above kMinTriangleArea. Degenerate input is rejected, not repaired.
class SurfaceMesh {
public:
    SurfaceMesh() = default;
    SurfaceMesh(std::vector<Point3> vertices, std::vector<Triangle> triangles,
                std::vector<int> labels = {});

    const std::vector<Point3>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    // Optional per-vertex region tags; empty when absent.
    const std::vector<int>& labels() const { return labels_; }

    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t triangle_count() const { return triangles_.size(); }
    bool empty() const { return triangles_.empty(); }

    const Point3& vertex(std::size_t i) const { return vertices_[i]; }
    const Triangle& triangle(std::size_t t) const { return triangles_[t]; }

    // Same connectivity and labels, new coordinates (validated again).
    SurfaceMesh with_vertices(std::vector<Point3> vertices) const;

    // Length of the bounding-box diagonal.
    double bounding_diameter() const;
    Point3 bbox_min() const;
    Point3 bbox_max() const;

private:
    std::vector<Point3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<int> labels_;
};

// One vector per mesh vertex, millimeters. All components finite.
class DisplacementField {
public:
    DisplacementField() = default;
    explicit DisplacementField(std::vector<Vec3> vectors);
    static DisplacementField zeros(std::size_t n);

    const std::vector<Vec3>& vectors() const { return vectors_; }
    std::size_t size() const { return vectors_.size(); }
    const Vec3& operator[](std::size_t i) const { return vectors_[i]; }

private:
    std::vector<Vec3> vectors_;
};

// Points inside a surface (nodule, airway or vessel samples).
struct InteriorPointSet {
    std::vector<Point3> points;
};

// v_i' = v_i + d_i with connectivity unchanged.
SurfaceMesh apply_displacement(const SurfaceMesh& mesh, const DisplacementField& field);

// deformed - source, per vertex. Both meshes must have the same vertex count.
DisplacementField displacement_between(const SurfaceMesh& source, const SurfaceMesh& deformed);

Point3 centroid(std::span<const Point3> points);

} // namespace lungdeform
