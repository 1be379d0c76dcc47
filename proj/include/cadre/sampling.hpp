#pragma once

#include <cstdint>

#include "cadre/mesh.hpp"

namespace cadre {

// Draws n points area-weighted over faces, barycentric-uniform within a face.
// Normals are the face normals. Deterministic given seed.
PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed);

} // namespace cadre
