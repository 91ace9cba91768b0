#include "lungdeform/mesh_ops.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>

#include "lungdeform/errors.hpp"

namespace lungdeform {

namespace {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
public:
    void add(double x)
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

} // namespace

std::vector<std::vector<int>> one_ring(const SurfaceMesh& m)
{
    std::vector<std::vector<int>> ring(m.vertex_count());
    for (const auto& tri : m.triangles()) {
        for (int k = 0; k < 3; ++k) {
            ring[tri[k]].push_back(tri[(k + 1) % 3]);
            ring[tri[k]].push_back(tri[(k + 2) % 3]);
        }
    }
    for (auto& r : ring) {
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
    return ring;
}

std::vector<Vec3> discrete_laplacian(const SurfaceMesh& m)
{
    const auto ring = one_ring(m);
    std::vector<Vec3> delta(m.vertex_count());
    for (std::size_t i = 0; i < ring.size(); ++i) {
        if (ring[i].empty()) {
            throw ValidationError("isolated vertex " + std::to_string(i));
        }
        Vec3 sum = Vec3::Zero();
        for (int j : ring[i]) sum += m.vertex(j);
        delta[i] = m.vertex(i) - sum / static_cast<double>(ring[i].size());
    }
    return delta;
}

Eigen::SparseMatrix<double> laplacian_matrix(const SurfaceMesh& m)
{
    const auto ring = one_ring(m);
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        if (ring[i].empty()) {
            throw ValidationError("isolated vertex " + std::to_string(i));
        }
        const double w = 1.0 / static_cast<double>(ring[i].size());
        const int row = static_cast<int>(i);
        entries.emplace_back(row, row, 1.0);
        for (int j : ring[i]) entries.emplace_back(row, j, -w);
    }
    const auto n = static_cast<Eigen::Index>(m.vertex_count());
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(entries.begin(), entries.end());
    return L;
}

bool is_closed(const SurfaceMesh& m)
{
    std::map<std::pair<int, int>, int> edge_use;
    for (const auto& tri : m.triangles()) {
        for (int k = 0; k < 3; ++k) {
            int a = tri[k];
            int b = tri[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edge_use[{a, b}];
        }
    }
    if (edge_use.empty()) return false;
    return std::all_of(edge_use.begin(), edge_use.end(),
                       [](const auto& e) { return e.second == 2; });
}

MeshVolume mesh_volume(const SurfaceMesh& m)
{
    if (!is_closed(m)) {
        throw ValidationError("mesh not closed");
    }
    // Any origin gives the same result on a closed surface; the vertex
    // centroid keeps the products small under large translations.
    const Point3 origin = centroid(m.vertices());
    CompensatedSum sum;
    for (const auto& tri : m.triangles()) {
        const Vec3 a = m.vertex(tri[0]) - origin;
        const Vec3 b = m.vertex(tri[1]) - origin;
        const Vec3 c = m.vertex(tri[2]) - origin;
        sum.add(a.dot(b.cross(c)));
    }
    const double signed_volume = sum.value() / 6.0;
    return MeshVolume{std::abs(signed_volume), signed_volume < 0.0};
}

} // namespace lungdeform
