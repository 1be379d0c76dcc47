#pragma once

#include <array>
#include <string>
#include <vector>

#include "cadre/quaternion.hpp"

namespace cadre {

// Triangle mesh with 64-bit vertex coordinates. Faces are vertex index
// triples; degenerate (zero-area) faces are dropped at load/cleanup time.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    bool empty() const { return faces.empty(); }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals; // empty, or one unit normal per point

    bool has_normals() const { return !normals.empty(); }
};

// 9-DoF object placement in camera space: v -> R*(s o v) + t.
struct Pose {
    Quaternion rotation = Quaternion::identity();
    Vec3 translation{0.0, 0.0, 0.0};
    Vec3 scale{1.0, 1.0, 1.0};
};

struct Aabb {
    Vec3 lo{0, 0, 0};
    Vec3 hi{0, 0, 0};
    Vec3 extent() const { return hi - lo; }
    double longest_edge() const;
};

// Drops faces with out-of-range indices rejected earlier and zero-area faces.
void drop_degenerate_faces(TriMesh& mesh, double area_eps = 1e-12);

double face_area(const TriMesh& mesh, int face);
Vec3 face_normal(const TriMesh& mesh, int face); // unit; requires non-degenerate face

Aabb bounding_box(const TriMesh& mesh);
// Radius of the origin-centered bounding sphere (max vertex norm).
double bounding_radius(const TriMesh& mesh);

// Scale, then rotate, then translate every vertex.
TriMesh apply_pose(const Pose& pose, const TriMesh& mesh);

TriMesh scale_mesh(const TriMesh& mesh, double factor);

// Wavefront OBJ, v/f records only, 1-based indices. Loading validates face
// indices and drops degenerate faces. Throws std::runtime_error on IO or
// parse failure.
TriMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const TriMesh& mesh);

} // namespace cadre
