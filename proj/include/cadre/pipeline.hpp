#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadre/dataset.hpp"
#include "cadre/detection_ap.hpp"
#include "cadre/embedding.hpp"
#include "cadre/encoder.hpp"
#include "cadre/pose.hpp"

namespace cadre {

// View embeddings for the retrieval index: every canonical view of every
// train object, in train_objects order. include_unseen appends the held-out
// objects' views, growing the catalog without touching the encoder.
std::vector<EmbeddingVector> view_embeddings(const EncoderParams& params, const Dataset& ds,
                                             bool include_unseen);
EmbeddingIndex build_view_index(const EncoderParams& params, const Dataset& ds,
                                bool include_unseen);

// Region embeddings for export: tagged image-region, object_id set to the
// ground-truth object and view_id to the region index within its sample.
std::vector<EmbeddingVector> region_embeddings(const EncoderParams& params,
                                               const std::vector<Sample>& samples);

// Which prediction components get replaced by ground truth during eval.
// GtBox reboxes regions from ground-truth boxes; detections already are
// ground-truth boxes here, so it leaves predictions bit-identical.
enum class Ablation { None, GtShape, GtRotation, GtTranslation, GtBox, AllGt };

Ablation ablation_from_name(const std::string& name);  // invalid_argument on junk
std::string ablation_name(Ablation a);

struct RegionPrediction {
    int class_id = -1;
    int object_id = -1;     // retrieved CAD entry
    int view_id = -1;       // winning index view
    double similarity = 0.0;  // cosine of the winning view; doubles as confidence
    int bin_index = 0;
    Pose pose;              // decoded rotation, lifted translation, hinted scale
    std::array<double, 2> center_px{0.0, 0.0};
    Box box;
};

// One forward pass: nearest CAD object for the region's class plus decoded
// rotation and center. Depth and scale are not predicted; the caller supplies
// them (the ground-truth support plane), so translation error is purely the
// decoded center's.
RegionPrediction predict_region(const EncoderParams& params, const RotationBins& bins,
                                const EmbeddingIndex& index, const DetectionRegion& region,
                                const CameraIntrinsics& intr, double depth, const Vec3& scale);

// predict_region over every region, depth/scale hints from the paired truths.
std::vector<RegionPrediction> predict_sample(const EncoderParams& params,
                                             const RotationBins& bins,
                                             const EmbeddingIndex& index, const Sample& sample,
                                             const CameraIntrinsics& intr);

// Overwrites the ablated components with ground truth (see Ablation).
void apply_ablation(std::vector<RegionPrediction>& preds, const Sample& sample, Ablation a);

struct EvalOptions {
    Ablation ablation = Ablation::None;
    bool include_unseen_index = false;
    int sample_points = 10000;       // surface samples per mesh comparison
    double mesh_f1_threshold = 0.3;  // F1 distance cut that scores mesh AP matches
    std::vector<double> f1_thresholds{0.1, 0.3, 0.5};  // shape-table rows
    std::uint64_t seed = 1;          // surface-sampling seed
    int jobs = 1;                    // worker threads over images; output is identical for any value
};

struct EvalReport {
    ApSweep box_ap;   // detection boxes (ground truth here, so ~1 by design)
    ApSweep mask_ap;  // re-rendered predicted-mesh silhouettes vs true masks
    ApSweep mesh_ap;  // F1-at-threshold matching on normalized surface clouds
    double mean_chamfer = 0.0;             // region vs its own truth, normalized pair
    double mean_normal_consistency = 0.0;
    std::map<double, double> mean_f1;      // threshold -> mean over regions
    double retrieval_top1 = 0.0;           // fraction of regions retrieving their true object
    double median_rotation_deg = 0.0;      // decoded-vs-true geodesic, degrees
    int num_images = 0;
    int num_regions = 0;
    std::size_t index_entries = 0;
};

// Full split evaluation: builds the view index, predicts every region,
// applies the ablation, and aggregates detection-style sweeps plus the
// shape table. Deterministic for a fixed (params, dataset, options) triple.
EvalReport evaluate(const EncoderParams& params, const RotationBins& bins, const Dataset& ds,
                    const std::vector<Sample>& samples, const EvalOptions& opts = {});

// Versioned JSON rendering of a report ("cadre-eval-v1"). jobs is excluded
// so worker count never changes the bytes.
std::string eval_report_json(const EvalReport& report, const Dataset& ds,
                             const EvalOptions& opts, const std::string& split_name);

} // namespace cadre
