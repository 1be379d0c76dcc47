#include "cadre/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cadre {

double Aabb::longest_edge() const {
    const Vec3 e = extent();
    return std::max({e[0], e[1], e[2]});
}

double face_area(const TriMesh& mesh, int face) {
    const auto& f = mesh.faces[face];
    const Vec3 a = mesh.vertices[f[0]];
    const Vec3 b = mesh.vertices[f[1]];
    const Vec3 c = mesh.vertices[f[2]];
    return 0.5 * norm(cross(b - a, c - a));
}

Vec3 face_normal(const TriMesh& mesh, int face) {
    const auto& f = mesh.faces[face];
    const Vec3 a = mesh.vertices[f[0]];
    const Vec3 b = mesh.vertices[f[1]];
    const Vec3 c = mesh.vertices[f[2]];
    const Vec3 n = cross(b - a, c - a);
    const double len = norm(n);
    if (len <= 0.0) throw std::domain_error("face_normal: degenerate face");
    return (1.0 / len) * n;
}

void drop_degenerate_faces(TriMesh& mesh, double area_eps) {
    std::vector<std::array<int, 3>> kept;
    kept.reserve(mesh.faces.size());
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        if (face_area(mesh, static_cast<int>(i)) > area_eps) kept.push_back(mesh.faces[i]);
    }
    mesh.faces = std::move(kept);
}

Aabb bounding_box(const TriMesh& mesh) {
    if (mesh.vertices.empty()) throw std::domain_error("bounding_box: empty mesh");
    Aabb box{mesh.vertices[0], mesh.vertices[0]};
    for (const Vec3& v : mesh.vertices) {
        for (int k = 0; k < 3; ++k) {
            box.lo[k] = std::min(box.lo[k], v[k]);
            box.hi[k] = std::max(box.hi[k], v[k]);
        }
    }
    return box;
}

double bounding_radius(const TriMesh& mesh) {
    double r = 0.0;
    for (const Vec3& v : mesh.vertices) r = std::max(r, norm(v));
    return r;
}

TriMesh apply_pose(const Pose& pose, const TriMesh& mesh) {
    if (!(pose.scale[0] > 0.0 && pose.scale[1] > 0.0 && pose.scale[2] > 0.0)) {
        throw std::domain_error("apply_pose: scale components must be positive");
    }
    if (!quat_is_unit(pose.rotation)) {
        throw std::domain_error("apply_pose: rotation must be unit-norm");
    }
    TriMesh out;
    out.faces = mesh.faces;
    out.vertices.reserve(mesh.vertices.size());
    for (const Vec3& v : mesh.vertices) {
        const Vec3 s{pose.scale[0] * v[0], pose.scale[1] * v[1], pose.scale[2] * v[2]};
        out.vertices.push_back(quat_apply(pose.rotation, s) + pose.translation);
    }
    return out;
}

TriMesh scale_mesh(const TriMesh& mesh, double factor) {
    TriMesh out;
    out.faces = mesh.faces;
    out.vertices.reserve(mesh.vertices.size());
    for (const Vec3& v : mesh.vertices) out.vertices.push_back(factor * v);
    return out;
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    TriMesh mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v[0] >> v[1] >> v[2])) {
                throw std::runtime_error("load_obj: bad vertex at " + path + ":" + std::to_string(lineno));
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            std::string tok;
            for (int k = 0; k < 3; ++k) {
                if (!(ss >> tok)) {
                    throw std::runtime_error("load_obj: bad face at " + path + ":" + std::to_string(lineno));
                }
                // accept v, v/vt, v/vt/vn records; only the vertex index is used
                f[k] = std::stoi(tok.substr(0, tok.find('/')));
                if (f[k] < 1 || f[k] > static_cast<int>(mesh.vertices.size())) {
                    throw std::runtime_error("load_obj: face index out of range at " + path + ":" +
                                             std::to_string(lineno));
                }
                f[k] -= 1;
            }
            mesh.faces.push_back(f);
        }
        // other record types ignored
    }
    drop_degenerate_faces(mesh);
    return mesh;
}

void save_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
        out << buf;
    }
    for (const auto& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

} // namespace cadre
