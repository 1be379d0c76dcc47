#pragma once

#include <functional>
#include <map>
#include <vector>

namespace cadre {

// Detection-style AP over generic payloads. The payload index pair passed to
// the match function identifies (prediction, ground truth) within one image.
struct ApPrediction {
    int class_id = 0;
    double confidence = 0.0;
    int payload = 0; // caller-side handle
};

struct ApGroundTruth {
    int class_id = 0;
    int payload = 0;
};

struct ApImage {
    long image_id = 0;
    std::vector<ApPrediction> predictions;
    std::vector<ApGroundTruth> ground_truths;
};

using ApInput = std::vector<ApImage>;

// match_fn(image, prediction payload, gt payload) -> score in [0, 1]
// (box IoU, mask IoU, or mesh F1). A pair is a match when score >= threshold.
using MatchFn = std::function<double(const ApImage&, int, int)>;

struct ApResult {
    std::map<int, double> per_class; // classes present in ground truth only
    double mean = 0.0;               // mean over per_class; 0 when empty
};

// Greedy confidence-descending matching (one GT per prediction, each GT used
// once), 101-point interpolated AP per class. Images are processed in
// image_id order; prediction ties broken by (image_id, insertion order).
ApResult average_precision(const ApInput& input, double match_threshold, const MatchFn& match_fn);

// Mean over the COCO threshold sweep 0.5:0.05:0.95, plus the AP50/AP75 cuts.
struct ApSweep {
    ApResult ap;   // mean over 10 thresholds
    ApResult ap50; // threshold 0.5
    ApResult ap75; // threshold 0.75
};

ApSweep average_precision_sweep(const ApInput& input, const MatchFn& match_fn);

// Mesh AP: payloads are (pred mesh, gt mesh) pair handles whose F1 at the
// shape threshold (0.3 Pix3D-style, 0.5 ScanNet-style) was precomputed by the
// caller; f1_lookup(image, pred payload, gt payload) returns that F1. The F1
// value is then swept against the IoU-style thresholds.
ApSweep mesh_ap(const ApInput& input, const MatchFn& f1_lookup);

const std::vector<double>& coco_iou_thresholds();

} // namespace cadre
