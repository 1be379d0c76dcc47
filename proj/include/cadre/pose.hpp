#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadre/box.hpp"
#include "cadre/mesh.hpp"
#include "cadre/quaternion.hpp"

namespace cadre {

struct CameraIntrinsics {
    double fx = 1.0, fy = 1.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
};

// Per-class rotation vocabularies: K unit-quaternion medoids each.
class RotationBins {
  public:
    RotationBins() = default;
    explicit RotationBins(std::map<int, std::vector<Quaternion>> bins);

    const std::vector<Quaternion>& bins_for(int class_id) const;
    const std::map<int, std::vector<Quaternion>>& all() const { return bins_; }
    bool has_class(int class_id) const { return bins_.count(class_id) != 0; }

  private:
    std::map<int, std::vector<Quaternion>> bins_;
};

struct PoseTarget {
    int bin_index = 0;
    Quaternion delta = Quaternion::identity();
    bool regress_mask = false;
    std::array<double, 2> center_delta = {0.0, 0.0};
};

// Geodesic K-medoid clustering of the training rotations of each class.
// Deterministic given seed; every class needs at least K rotations.
RotationBins build_bins(const std::map<int, std::vector<Quaternion>>& train_rotations,
                        int k, std::uint64_t seed);

// Nearest bin by geodesic distance (lowest index on ties), residual
// delta = bin^-1 * truth with w >= 0, and the refinement gate
// regress_mask = (distance <= theta_gate).
PoseTarget encode_rotation(const Quaternion& truth, const RotationBins& bins,
                           int class_id, double theta_gate);

// bin * normalize(delta_raw); a (near-)zero raw delta falls back to the bin
// medoid and bumps decode_rotation_fallback_count().
Quaternion decode_rotation(int bin_index, const std::array<double, 4>& delta_raw,
                           const RotationBins& bins, int class_id);
std::uint64_t decode_rotation_fallback_count();

// x^2/2 inside the margin, delta*(|x| - delta/2) outside.
double huber(double x, double delta);
double huber_grad(double x, double delta);

// Center shift as a fraction of box size: dx = (cx_true - cx_box)/width.
std::array<double, 2> encode_center(const Box& box,
                                    const std::array<double, 2>& true_center_px);
std::array<double, 2> decode_center(const Box& box,
                                    const std::array<double, 2>& deltas);

// Ray through pixel (u, v) intersected with the plane at depth z:
// ((u-cx)z/fx, (v-cy)z/fy, z). Camera looks along +z.
Vec3 lift_center(const std::array<double, 2>& center_px, double z,
                 const CameraIntrinsics& intr);

// Pose labels under a horizontal image flip: rotation (w,x,y,z) -> (w,x,-y,-z),
// translation x -> -x, center delta dx -> -dx. Involution.
std::pair<Pose, std::array<double, 2>> flip_pose(const Pose& pose,
                                                 const std::array<double, 2>& center_delta);

// JSON round-trip so train and eval share one rotation vocabulary.
void save_bins(const std::string& path, const RotationBins& bins);
RotationBins load_bins(const std::string& path);

} // namespace cadre
