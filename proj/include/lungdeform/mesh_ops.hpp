#pragma once

#include <vector>

#include <Eigen/SparseCore>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

// Sorted one-ring neighbor lists, one per vertex.
std::vector<std::vector<int>> one_ring(const SurfaceMesh& m);

// Uniform (umbrella) Laplacian: delta_i = v_i - mean of one-ring neighbors.
// Throws ValidationError "isolated vertex" if some vertex has no neighbor.
std::vector<Vec3> discrete_laplacian(const SurfaceMesh& m);

// Same operator as a sparse V x V matrix L, so that delta = L * X row-wise.
// Cotangent weights could be substituted here without touching callers.
Eigen::SparseMatrix<double> laplacian_matrix(const SurfaceMesh& m);

struct MeshVolume {
    double value = 0.0; // absolute enclosed volume, mm^3
    bool inverted = false; // signed volume was negative (inward-facing triangles)
};

// Divergence-theorem volume, sum of det[a,b,c]/6 with compensated summation.
// Throws ValidationError "mesh not closed" on boundary edges.
MeshVolume mesh_volume(const SurfaceMesh& m);

// True when every undirected edge is shared by exactly two triangles.
bool is_closed(const SurfaceMesh& m);

} // namespace lungdeform
