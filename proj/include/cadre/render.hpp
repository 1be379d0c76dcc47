#pragma once

#include <vector>

#include "cadre/image.hpp"
#include "cadre/mesh.hpp"
#include "cadre/pose.hpp"

namespace cadre {

// Orthographic depth-shaded silhouette of the mesh under the given rotation.
// The projection is scaled by the rotation-invariant bounding radius, so q
// and -q produce identical images and the object always fits the frame.
// Background 0; shade = 0.3 + 0.7*(r - z)/(2r), nearer (smaller z) brighter.
// Row-parallel; render_view_serial is the reference implementation and
// produces byte-identical output.
Image render_view(const TriMesh& mesh, const Quaternion& rotation, int resolution);
Image render_view_serial(const TriMesh& mesh, const Quaternion& rotation, int resolution);

struct SceneObject {
    const TriMesh* mesh = nullptr;
    Pose pose;
};

// Perspective pinhole render of posed objects with a z-buffer. owner holds
// the index of the visible object per pixel (-1 for background). Objects are
// shaded by their own camera-space depth range, nearer brighter.
struct SceneRender {
    Image image;
    std::vector<int> owner;
};

SceneRender render_scene(const std::vector<SceneObject>& objects,
                         const CameraIntrinsics& intr, int width, int height);

// Amodal silhouette of one posed object alone under the scene camera:
// 1 where the object projects, 0 elsewhere.
Image render_mask(const TriMesh& mesh, const Pose& pose, const CameraIntrinsics& intr,
                  int width, int height);

// Tight pixel bounds of a binary mask as a Box ([x0, x1) x [y0, y1) in pixel
// units). Throws std::domain_error if the mask is empty.
Box mask_bounds(const Image& mask);

} // namespace cadre
