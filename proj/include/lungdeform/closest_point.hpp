#pragma once

#include <vector>

#include <Eigen/Core>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

// A location on a mesh surface.
struct SurfacePoint {
    Point3 point = Point3::Zero();
    double distance = 0.0;      // |query - point|
    int triangle = -1;
    Vec3 barycentric = Vec3::Zero(); // weights of triangle corners 0,1,2
};

// Closest point on a single triangle. Barycentric weights are exact
// (0/1 entries) when the closest feature is a vertex.
SurfacePoint closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                       const Point3& c);

// Bounding-volume hierarchy over the triangles of a mesh. The tree keeps a
// copy of the vertex positions, so it stays valid if the mesh goes away.
//
// Queries return exactly what an exhaustive scan over all triangles would
// return: the minimum squared distance, ties broken by lowest triangle index.
class TriangleBvh {
public:
    explicit TriangleBvh(const SurfaceMesh& mesh);
    // Raw positions, for intermediate shapes that are not validated meshes.
    TriangleBvh(std::vector<Point3> vertices, std::vector<Triangle> triangles);

    SurfacePoint closest_point(const Point3& p) const;

private:
    struct Node {
        Eigen::AlignedBox3d box;
        int left = -1;  // child node indices, -1 for leaves
        int right = -1;
        int begin = 0;  // range into order_ for leaves
        int end = 0;
    };

    int build(int begin, int end);
    SurfacePoint triangle_query(const Point3& p, int tri) const;

    std::vector<Point3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

// Global closest point on the surface of m. Throws ValidationError
// "empty surface" when m has no triangles.
SurfacePoint closest_point_on_surface(const Point3& p, const SurfaceMesh& m);

// Exhaustive reference scan used to validate the hierarchy.
SurfacePoint closest_point_brute_force(const Point3& p, const SurfaceMesh& m);

// Position of a barycentric location on (possibly moved) vertex positions.
Point3 evaluate_surface_point(const SurfaceMesh& m, int triangle, const Vec3& barycentric);

// Generalized winding number of the closed surface around p (1 inside, 0 outside).
double winding_number(const SurfaceMesh& m, const Point3& p);

} // namespace lungdeform
