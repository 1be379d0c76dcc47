#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadre/box.hpp"
#include "cadre/image.hpp"
#include "cadre/mesh.hpp"
#include "cadre/pose.hpp"
#include "cadre/rng.hpp"

namespace cadre {

// One detected object hypothesis in an image: a box, the binary mask and
// image crop resampled to the fixed ROI resolution, and a class label.
struct DetectionRegion {
    Box box;
    Image mask;      // roi_resolution^2, values in {0,1}
    Image features;  // roi_resolution^2 bilinear crop of the scene image
    int class_id = -1;
};

// Per-region ground truth: which object, its 9-DoF camera-space pose, the
// projected 2D center, and the full-resolution amodal silhouette.
struct GroundTruth {
    int object_id = -1;
    Pose pose;
    double center_u = 0.0;
    double center_v = 0.0;
    Image scene_mask;
};

struct Sample {
    std::string name;  // doubles as the image file stem on disk
    Image image;
    std::vector<DetectionRegion> regions;
    std::vector<GroundTruth> truths;  // parallel to regions
};

// A CAD catalog entry: mesh plus its canonical-view renders. The view
// rotations are shared per class (selected from training-set rotations).
struct CadEntry {
    int object_id = -1;
    int class_id = -1;
    TriMesh mesh;
    std::vector<Quaternion> view_rotations;
    std::vector<Image> view_renders;
};

struct DatasetSpec {
    int num_classes = 5;
    int objects_per_class = 8;
    int unseen_per_class = 2;   // objects held out of train scenes and index
    int train_scenes = 160;
    int val_scenes = 40;
    int unseen_scenes = 30;
    int max_objects_per_scene = 8;
    int scene_size = 96;
    double focal = 64.0;        // fx = fy, principal point at the center
    int view_count = 16;
    int view_resolution = 32;
    int roi_resolution = 32;
    std::uint64_t seed = 7;
};

struct Dataset {
    DatasetSpec spec;
    CameraIntrinsics intrinsics;
    std::vector<std::string> class_names;
    std::vector<CadEntry> entries;       // indexed by object_id
    std::vector<int> train_objects;      // object_ids appearing in train/val
    std::vector<int> unseen_objects;     // held-out object_ids
    std::map<int, std::vector<Quaternion>> canonical_views;  // class -> k rotations
    std::vector<Sample> train, val, unseen;
};

// Number of procedural shape families available (the class count ceiling).
int shape_family_count();
std::string shape_family_name(int family);

// Randomized instance of one family, recentered on its bounding-box center.
// Every family is asymmetric: a small off-axis foot breaks all rotational
// self-symmetries so a rendered view determines the rotation.
TriMesh make_shape(int family, Rng& rng);

// Procedural scenes: 1..max_objects_per_scene posed objects per sample on a
// jittered grid, perspective-rendered with exact amodal masks and boxes.
// Scene images and view renders are snapped to the 8-bit PGM grid at
// creation, so saving and reloading the dataset is lossless.
// Throws std::domain_error when the spec is below minimums (2 classes,
// 4 objects per class, unseen_per_class leaving at least 2 train objects).
Dataset generate_dataset(const DatasetSpec& spec);

// K-medoid selection of view rotations per class under quat_geodesic.
// Requires at least k rotations per class; output order is stable.
std::map<int, std::vector<Quaternion>> select_canonical_views(
    const std::map<int, std::vector<Quaternion>>& rotations_per_class, int k,
    std::uint64_t seed);

struct JitteredView {
    Image image;
    Quaternion rotation;
};

// Ground-truth rotation composed with a random axis-angle of at most
// `magnitude` radians, rendered as a view. magnitude must be positive.
JitteredView jittered_gt_view(const TriMesh& mesh, const Quaternion& gt_rotation,
                              double magnitude, std::uint64_t seed, int resolution);

// On-disk layout under root: dataset.json, meshes/*.obj,
// renders/obj_XXX/view_XX.pgm, images/*.pgm, masks/*.pgm, annotations.jsonl.
void save_dataset(const std::string& root, const Dataset& dataset);
Dataset load_dataset(const std::string& root);

// Parses JSON-lines region records ({image, split, class, box, mask,
// model_id, rotation, translation, scale, center, focal}) and groups them
// into samples by image, loading rasters relative to the annotation file.
// Throws std::runtime_error naming the offending field and line.
struct AnnotationSet {
    std::vector<Sample> train, val, unseen;
};
AnnotationSet load_annotations(const std::string& path, const CameraIntrinsics& intr,
                               int roi_resolution);

// Rebuilds a region (mask + feature crops at roi_resolution) from a box on
// the scene rasters; shared by generation, loading, and eval-time rebox.
DetectionRegion build_region(const Image& scene, const Image& scene_mask, const Box& box,
                             int class_id, int roi_resolution);

} // namespace cadre
