#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cadre/mesh.hpp"
#include "cadre/sampling.hpp"

using namespace cadre;

namespace {
// Nearest face by reconstructing which triangle plane the point lies on —
// for the flat test meshes every sample sits exactly on its source face.
int owning_face(const TriMesh& m, const Vec3& p) {
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const Vec3& a = m.vertices[m.faces[f][0]];
        const Vec3& b = m.vertices[m.faces[f][1]];
        const Vec3& c = m.vertices[m.faces[f][2]];
        // Barycentric solve in the triangle plane.
        Vec3 v0 = b - a, v1 = c - a, v2 = p - a;
        double d00 = dot(v0, v0), d01 = dot(v0, v1), d11 = dot(v1, v1);
        double d20 = dot(v2, v0), d21 = dot(v2, v1);
        double denom = d00 * d11 - d01 * d01;
        double v = (d11 * d20 - d01 * d21) / denom;
        double w = (d00 * d21 - d01 * d20) / denom;
        double u = 1.0 - v - w;
        double off = norm(v2 - (v * v0 + w * v1));
        if (off < 1e-9 && u >= -1e-9 && v >= -1e-9 && w >= -1e-9) return static_cast<int>(f);
    }
    return -1;
}
} // namespace

TEST_CASE("single triangle: sample lies inside it, normal is the face normal") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
    m.faces = {{0, 1, 2}};
    PointCloud pc = sample_surface(m, 1, 42);
    REQUIRE(pc.points.size() == 1);
    CHECK(owning_face(m, pc.points[0]) == 0);
    REQUIRE(pc.has_normals());
    CHECK(pc.normals[0][2] == doctest::Approx(1.0));
}

TEST_CASE("two faces with 9:1 areas draw samples in proportion") {
    TriMesh m;
    // Face 0 area 4.5, face 1 area 0.5.
    m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const int n = 100000;
    PointCloud pc = sample_surface(m, n, 7);
    int big = 0;
    for (const auto& p : pc.points)
        if (p[0] < 5.0) ++big;
    double frac = double(big) / n;
    CHECK(frac == doctest::Approx(0.9).epsilon(0.0112));  // ±0.01 absolute

    // Chi-square with df=1 at alpha=0.001: statistic must stay below 10.828.
    double e0 = 0.9 * n, e1 = 0.1 * n;
    double o0 = big, o1 = n - big;
    double chi2 = (o0 - e0) * (o0 - e0) / e0 + (o1 - e1) * (o1 - e1) / e1;
    CHECK(chi2 < 10.828);
}

TEST_CASE("face frequencies match area fractions on a 4-face mesh (chi-square)") {
    TriMesh m;
    // Areas 0.5, 1.0, 2.0, 4.5 laid out along x so owning_face is unambiguous.
    m.vertices = {{0, 0, 0},  {1, 0, 0},  {0, 1, 0},   // 0.5
                  {10, 0, 0}, {12, 0, 0}, {10, 1, 0},  // 1.0
                  {20, 0, 0}, {22, 0, 0}, {20, 2, 0},  // 2.0
                  {30, 0, 0}, {33, 0, 0}, {30, 3, 0}}; // 4.5
    m.faces = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {9, 10, 11}};
    const int n = 100000;
    PointCloud pc = sample_surface(m, n, 1234);
    std::vector<int> counts(4, 0);
    for (const auto& p : pc.points) {
        int f = p[0] < 5 ? 0 : p[0] < 15 ? 1 : p[0] < 25 ? 2 : 3;
        ++counts[f];
    }
    double total_area = 0.5 + 1.0 + 2.0 + 4.5;
    double areas[4] = {0.5, 1.0, 2.0, 4.5};
    double chi2 = 0.0;
    for (int f = 0; f < 4; ++f) {
        double expected = areas[f] / total_area * n;
        chi2 += (counts[f] - expected) * (counts[f] - expected) / expected;
    }
    CHECK(chi2 < 16.266);  // df=3, alpha=0.001
}

TEST_CASE("same seed reproduces the cloud, different seed does not") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    PointCloud a = sample_surface(m, 500, 99);
    PointCloud b = sample_surface(m, 500, 99);
    PointCloud c = sample_surface(m, 500, 100);
    REQUIRE(a.points.size() == b.points.size());
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i] != b.points[i]) identical = false;
        if (a.points[i] != c.points[i]) differs = true;
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("sampling errors") {
    TriMesh empty;
    CHECK_THROWS_AS(sample_surface(empty, 10, 0), std::domain_error);

    TriMesh degen;
    degen.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    degen.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(degen, 10, 0), std::domain_error);

    TriMesh ok;
    ok.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    ok.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(ok, 0, 0), std::domain_error);
}
