#pragma once

#include <filesystem>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

// ASCII OFF (.off) or ASCII PLY (.ply), triangles only, picked by extension.
// Parse errors name the file and line. Coordinates are written with 17
// significant digits, so save/load round-trips doubles exactly.
SurfaceMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const SurfaceMesh& mesh, const std::filesystem::path& path);

} // namespace lungdeform
