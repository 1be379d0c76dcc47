#include "cadre/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cadre {

namespace {

// Counter-clockwise edge function: positive when p lies left of a->b.
inline double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct ScreenTriangle {
    double x[3], y[3], z[3];
    double area = 0.0;   // signed doubled area; 0 = skip
    int y_begin = 0, y_end = 0; // pixel row range [begin, end)
    double shade_lo = 0.0, shade_scale = 0.0; // shade = shade_lo + shade_scale*(zref - z)
    double zref = 0.0;
    int owner = -1;
    bool flat_shade = false;
    double flat_value = 1.0;
};

// Shared fill rule: a pixel center is covered when all three edge functions
// carry the sign of the triangle's area (boundary pixels included). Depth is
// the barycentric interpolation of the vertex depths. The z-buffer keeps the
// strictly smaller depth, and triangles are visited in index order, so the
// image is independent of row-level parallelism.
template <typename PerPixel>
void raster_row(const std::vector<ScreenTriangle>& tris, int y, int width,
                PerPixel&& emit) {
    const double py = y + 0.5;
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const ScreenTriangle& tr = tris[t];
        if (y < tr.y_begin || y >= tr.y_end) continue;
        const double minx = std::min({tr.x[0], tr.x[1], tr.x[2]});
        const double maxx = std::max({tr.x[0], tr.x[1], tr.x[2]});
        int x_begin = std::max(0, static_cast<int>(std::floor(minx - 0.5)));
        int x_end = std::min(width, static_cast<int>(std::ceil(maxx + 0.5)));
        for (int x = x_begin; x < x_end; ++x) {
            const double px = x + 0.5;
            const double e0 = edge(tr.x[0], tr.y[0], tr.x[1], tr.y[1], px, py);
            const double e1 = edge(tr.x[1], tr.y[1], tr.x[2], tr.y[2], px, py);
            const double e2 = edge(tr.x[2], tr.y[2], tr.x[0], tr.y[0], px, py);
            const bool inside = tr.area > 0.0 ? (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0)
                                              : (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
            if (!inside) continue;
            const double w0 = e1 / tr.area;
            const double w1 = e2 / tr.area;
            const double w2 = e0 / tr.area;
            const double z = w0 * tr.z[0] + w1 * tr.z[1] + w2 * tr.z[2];
            emit(x, tr, z);
        }
    }
}

std::vector<ScreenTriangle> project_orthographic(const TriMesh& mesh,
                                                 const Quaternion& rotation,
                                                 int resolution) {
    const double radius = bounding_radius(mesh);
    if (!(radius > 0.0)) throw std::domain_error("render_view: mesh has zero radius");
    const double scale = 0.45 * resolution / radius;
    const double half = 0.5 * resolution;

    std::vector<Vec3> rotated(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        rotated[i] = quat_apply(rotation, mesh.vertices[i]);

    std::vector<ScreenTriangle> tris;
    tris.reserve(mesh.faces.size());
    for (const auto& f : mesh.faces) {
        ScreenTriangle tr;
        for (int c = 0; c < 3; ++c) {
            const Vec3& v = rotated[f[c]];
            tr.x[c] = half + scale * v[0];
            tr.y[c] = half - scale * v[1]; // image rows grow downward
            tr.z[c] = v[2];
        }
        tr.area = edge(tr.x[0], tr.y[0], tr.x[1], tr.y[1], tr.x[2], tr.y[2]);
        if (tr.area == 0.0) continue;
        const double miny = std::min({tr.y[0], tr.y[1], tr.y[2]});
        const double maxy = std::max({tr.y[0], tr.y[1], tr.y[2]});
        tr.y_begin = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
        tr.y_end = std::min(resolution, static_cast<int>(std::ceil(maxy + 0.5)));
        tr.zref = radius;
        tr.shade_lo = 0.3;
        tr.shade_scale = 0.7 / (2.0 * radius);
        tris.push_back(tr);
    }
    return tris;
}

template <bool Parallel>
Image render_view_impl(const TriMesh& mesh, const Quaternion& rotation, int resolution) {
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw std::domain_error("render_view: empty mesh");
    if (resolution < 1) throw std::domain_error("render_view: resolution must be positive");
    if (!quat_is_unit(rotation)) throw std::domain_error("render_view: non-unit rotation");

    const std::vector<ScreenTriangle> tris = project_orthographic(mesh, rotation, resolution);
    Image out(resolution, resolution, 0.0);
    std::vector<double> zbuf(static_cast<std::size_t>(resolution) * resolution,
                             std::numeric_limits<double>::infinity());

    auto run_row = [&](int y) {
        raster_row(tris, y, resolution, [&](int x, const ScreenTriangle& tr, double z) {
            double& best = zbuf[static_cast<std::size_t>(y) * resolution + x];
            if (z < best) {
                best = z;
                double shade = tr.shade_lo + tr.shade_scale * (tr.zref - z);
                out.at(x, y) = std::clamp(shade, 0.0, 1.0);
            }
        });
    };
    if constexpr (Parallel) {
        #pragma omp parallel for schedule(static)
        for (int y = 0; y < resolution; ++y) run_row(y);
    } else {
        for (int y = 0; y < resolution; ++y) run_row(y);
    }
    return out;
}

} // namespace

Image render_view(const TriMesh& mesh, const Quaternion& rotation, int resolution) {
    return render_view_impl<true>(mesh, rotation, resolution);
}

Image render_view_serial(const TriMesh& mesh, const Quaternion& rotation, int resolution) {
    return render_view_impl<false>(mesh, rotation, resolution);
}

namespace {

// Perspective projection of one posed mesh; triangles with any vertex at or
// behind the camera plane are discarded (scene content sits well in front).
void project_perspective(const TriMesh& mesh, const Pose& pose,
                         const CameraIntrinsics& intr, int width, int height,
                         int owner, bool flat, std::vector<ScreenTriangle>& out) {
    TriMesh posed = apply_pose(pose, mesh);
    double zmin = std::numeric_limits<double>::infinity();
    double zmax = -std::numeric_limits<double>::infinity();
    for (const Vec3& v : posed.vertices) {
        zmin = std::min(zmin, v[2]);
        zmax = std::max(zmax, v[2]);
    }
    for (const auto& f : posed.faces) {
        ScreenTriangle tr;
        bool ok = true;
        for (int c = 0; c < 3; ++c) {
            const Vec3& v = posed.vertices[f[c]];
            if (!(v[2] > 1e-9)) {
                ok = false;
                break;
            }
            tr.x[c] = intr.fx * v[0] / v[2] + intr.cx;
            tr.y[c] = intr.fy * v[1] / v[2] + intr.cy;
            tr.z[c] = v[2];
        }
        if (!ok) continue;
        tr.area = edge(tr.x[0], tr.y[0], tr.x[1], tr.y[1], tr.x[2], tr.y[2]);
        if (tr.area == 0.0) continue;
        const double miny = std::min({tr.y[0], tr.y[1], tr.y[2]});
        const double maxy = std::max({tr.y[0], tr.y[1], tr.y[2]});
        tr.y_begin = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
        tr.y_end = std::min(height, static_cast<int>(std::ceil(maxy + 0.5)));
        if (tr.y_begin >= tr.y_end) continue;
        tr.owner = owner;
        if (flat || !(zmax > zmin)) {
            tr.flat_shade = true;
            tr.flat_value = 1.0;
        } else {
            tr.zref = zmax;
            tr.shade_lo = 0.3;
            tr.shade_scale = 0.7 / (zmax - zmin);
        }
        out.push_back(tr);
    }
}

} // namespace

SceneRender render_scene(const std::vector<SceneObject>& objects,
                         const CameraIntrinsics& intr, int width, int height) {
    if (width < 1 || height < 1) throw std::domain_error("render_scene: bad raster size");
    std::vector<ScreenTriangle> tris;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (!objects[i].mesh) throw std::invalid_argument("render_scene: null mesh");
        project_perspective(*objects[i].mesh, objects[i].pose, intr, width, height,
                            static_cast<int>(i), false, tris);
    }
    SceneRender result;
    result.image = Image(width, height, 0.0);
    result.owner.assign(static_cast<std::size_t>(width) * height, -1);
    std::vector<double> zbuf(result.owner.size(), std::numeric_limits<double>::infinity());

    #pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        raster_row(tris, y, width, [&](int x, const ScreenTriangle& tr, double z) {
            const std::size_t idx = static_cast<std::size_t>(y) * width + x;
            if (z < zbuf[idx]) {
                zbuf[idx] = z;
                result.owner[idx] = tr.owner;
                double shade = tr.flat_shade
                                   ? tr.flat_value
                                   : tr.shade_lo + tr.shade_scale * (tr.zref - z);
                result.image.at(x, y) = std::clamp(shade, 0.0, 1.0);
            }
        });
    }
    return result;
}

Image render_mask(const TriMesh& mesh, const Pose& pose, const CameraIntrinsics& intr,
                  int width, int height) {
    if (width < 1 || height < 1) throw std::domain_error("render_mask: bad raster size");
    std::vector<ScreenTriangle> tris;
    project_perspective(mesh, pose, intr, width, height, 0, true, tris);
    Image mask(width, height, 0.0);
    #pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        raster_row(tris, y, width,
                   [&](int x, const ScreenTriangle&, double) { mask.at(x, y) = 1.0; });
    }
    return mask;
}

Box mask_bounds(const Image& mask) {
    int minx = mask.width, miny = mask.height, maxx = -1, maxy = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) >= 0.5) {
                minx = std::min(minx, x);
                miny = std::min(miny, y);
                maxx = std::max(maxx, x);
                maxy = std::max(maxy, y);
            }
        }
    }
    if (maxx < 0) throw std::domain_error("mask_bounds: empty mask");
    return Box{static_cast<double>(minx), static_cast<double>(miny),
               static_cast<double>(maxx + 1), static_cast<double>(maxy + 1)};
}

} // namespace cadre
