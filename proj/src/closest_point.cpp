#include "lungdeform/closest_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Geometry>

#include "lungdeform/errors.hpp"

namespace lungdeform {

SurfacePoint closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                       const Point3& c)
{
    // Voronoi-region walk (Ericson, Real-Time Collision Detection, 5.1.5).
    SurfacePoint out;
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        out.point = a;
        out.barycentric = Vec3(1.0, 0.0, 0.0);
    } else {
        const Vec3 bp = p - b;
        const double d3 = ab.dot(bp);
        const double d4 = ac.dot(bp);
        const double vc = d1 * d4 - d3 * d2;
        const Vec3 cp = p - c;
        const double d5 = ab.dot(cp);
        const double d6 = ac.dot(cp);
        const double vb = d5 * d2 - d1 * d6;
        const double va = d3 * d6 - d5 * d4;
        if (d3 >= 0.0 && d4 <= d3) {
            out.point = b;
            out.barycentric = Vec3(0.0, 1.0, 0.0);
        } else if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
            const double v = d1 / (d1 - d3);
            out.point = a + v * ab;
            out.barycentric = Vec3(1.0 - v, v, 0.0);
        } else if (d6 >= 0.0 && d5 <= d6) {
            out.point = c;
            out.barycentric = Vec3(0.0, 0.0, 1.0);
        } else if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
            const double w = d2 / (d2 - d6);
            out.point = a + w * ac;
            out.barycentric = Vec3(1.0 - w, 0.0, w);
        } else if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
            const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            out.point = b + w * (c - b);
            out.barycentric = Vec3(0.0, 1.0 - w, w);
        } else {
            const double denom = 1.0 / (va + vb + vc);
            const double v = vb * denom;
            const double w = vc * denom;
            out.point = a + ab * v + ac * w;
            out.barycentric = Vec3(1.0 - v - w, v, w);
        }
    }
    out.distance = (p - out.point).norm();
    return out;
}

TriangleBvh::TriangleBvh(const SurfaceMesh& mesh) : TriangleBvh(mesh.vertices(), mesh.triangles())
{
}

TriangleBvh::TriangleBvh(std::vector<Point3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles))
{
    if (triangles_.empty()) {
        throw ValidationError("empty surface");
    }
    order_.resize(triangles_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * triangles_.size());
    build(0, static_cast<int>(order_.size()));
}

int TriangleBvh::build(int begin, int end)
{
    constexpr int kLeafSize = 4;
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d centroid_box;
    for (int k = begin; k < end; ++k) {
        const auto& tri = triangles_[order_[k]];
        for (int c : tri) box.extend(vertices_[c]);
        centroid_box.extend(
            Point3((vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0));
    }
    nodes_[index].box = box;

    if (end - begin <= kLeafSize) {
        nodes_[index].begin = begin;
        nodes_[index].end = end;
        return index;
    }

    int axis = 0;
    centroid_box.sizes().maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    auto key = [&](int t) {
        const auto& tri = triangles_[t];
        return vertices_[tri[0]][axis] + vertices_[tri[1]][axis] + vertices_[tri[2]][axis];
    };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int x, int y) {
                         const double kx = key(x);
                         const double ky = key(y);
                         return kx < ky || (kx == ky && x < y);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
}

SurfacePoint TriangleBvh::triangle_query(const Point3& p, int tri) const
{
    const auto& t = triangles_[tri];
    SurfacePoint sp = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
    sp.triangle = tri;
    return sp;
}

SurfacePoint TriangleBvh::closest_point(const Point3& p) const
{
    SurfacePoint best;
    double best_d2 = std::numeric_limits<double>::infinity();

    std::vector<int> stack;
    stack.reserve(64);
    stack.push_back(0);
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        const double box_d2 = node.box.squaredExteriorDistance(p);
        // Slack keeps the pruning conservative against rounding in the box bound.
        if (box_d2 > best_d2 * (1.0 + 1e-12) + 1e-300) continue;

        if (node.left < 0) {
            for (int k = node.begin; k < node.end; ++k) {
                const int tri = order_[k];
                SurfacePoint sp = triangle_query(p, tri);
                const double d2 = (p - sp.point).squaredNorm();
                if (d2 < best_d2 || (d2 == best_d2 && tri < best.triangle)) {
                    best_d2 = d2;
                    best = sp;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
        const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
        // Push the farther child first so the nearer one is visited next.
        if (dl <= dr) {
            stack.push_back(node.right);
            stack.push_back(node.left);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

SurfacePoint closest_point_on_surface(const Point3& p, const SurfaceMesh& m)
{
    return TriangleBvh(m).closest_point(p);
}

SurfacePoint closest_point_brute_force(const Point3& p, const SurfaceMesh& m)
{
    if (m.empty()) {
        throw ValidationError("empty surface");
    }
    SurfacePoint best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
        const auto& tri = m.triangle(t);
        SurfacePoint sp =
            closest_point_on_triangle(p, m.vertex(tri[0]), m.vertex(tri[1]), m.vertex(tri[2]));
        const double d2 = (p - sp.point).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = sp;
            best.triangle = static_cast<int>(t);
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

Point3 evaluate_surface_point(const SurfaceMesh& m, int triangle, const Vec3& barycentric)
{
    const auto& tri = m.triangle(static_cast<std::size_t>(triangle));
    return barycentric[0] * m.vertex(tri[0]) + barycentric[1] * m.vertex(tri[1]) +
           barycentric[2] * m.vertex(tri[2]);
}

double winding_number(const SurfaceMesh& m, const Point3& p)
{
    double total = 0.0;
    for (const auto& tri : m.triangles()) {
        const Vec3 a = m.vertex(tri[0]) - p;
        const Vec3 b = m.vertex(tri[1]) - p;
        const Vec3 c = m.vertex(tri[2]) - p;
        const double la = a.norm();
        const double lb = b.norm();
        const double lc = c.norm();
        const double num = a.dot(b.cross(c));
        const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
        total += 2.0 * std::atan2(num, den);
    }
    return total / (4.0 * std::numbers::pi);
}

} // namespace lungdeform
