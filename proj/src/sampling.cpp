#include "cadre/sampling.hpp"

#include <algorithm>
#include <stdexcept>

#include "cadre/rng.hpp"

namespace cadre {

PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
    if (n < 1) throw std::domain_error("sample_surface: n must be >= 1");
    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        total += face_area(mesh, static_cast<int>(f));
        cumulative.push_back(total);
    }
    if (mesh.faces.empty() || total <= 0.0) {
        throw std::domain_error("sample_surface: mesh has no non-degenerate face");
    }

    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(n);
    cloud.normals.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const int f = static_cast<int>(std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1));
        const auto& face = mesh.faces[f];
        const Vec3 a = mesh.vertices[face[0]];
        const Vec3 b = mesh.vertices[face[1]];
        const Vec3 c = mesh.vertices[face[2]];
        // sqrt trick: uniform barycentric coordinates
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        const double wa = 1.0 - r1;
        const double wb = r1 * (1.0 - r2);
        const double wc = r1 * r2;
        cloud.points.push_back({wa * a[0] + wb * b[0] + wc * c[0],
                                wa * a[1] + wb * b[1] + wc * c[1],
                                wa * a[2] + wb * b[2] + wc * c[2]});
        cloud.normals.push_back(face_normal(mesh, f));
    }
    return cloud;
}

} // namespace cadre
