#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadre/dataset.hpp"
#include "cadre/embedding.hpp"
#include "cadre/encoder.hpp"
#include "cadre/hyperparams.hpp"
#include "cadre/pose.hpp"

namespace cadre {

// A rendered CAD view offered to the contrastive loss as a positive or
// negative candidate for some anchor region.
struct ViewExample {
    Image image;
    int object_id = -1;
    int view_id = -1;
};

// One region fully prepared for a training step: augmented crops, encoded
// pose targets, repeat-factor weight, and the view candidate pool.
struct TrainExample {
    Image features;
    Image mask;
    int class_id = -1;
    int object_id = -1;
    PoseTarget target;
    double weight = 1.0;
    std::vector<ViewExample> positives;
    std::vector<ViewExample> negatives;
};

// Elementwise mask product M o F; sizes must agree.
Image mask_features(const Image& features, const Image& mask);

EmbeddingVector encode_region(const EncoderParams& params, const Image& masked_features,
                              int class_id);
EmbeddingVector encode_view(const EncoderParams& params, const Image& view, int class_id,
                            int object_id, int view_id);

struct LossBreakdown {
    double total = 0.0;
    double embedding = 0.0;   // mean of repeat-weighted contrastive losses
    double pose_class = 0.0;  // mean cross-entropy over rotation bins
    double pose_reg = 0.0;    // mean gated per-component huber on the delta
    double center = 0.0;      // mean huber on the center deltas
};

// total = 0.5*embedding + 0.25*pose_class + 5.0*(pose_reg + center), using
// the weights from hp. Candidates are hard-mined per anchor (caps P_h/N_h)
// before the contrastive term. Empty batch -> domain error.
LossBreakdown total_loss(const EncoderParams& params, const std::vector<TrainExample>& batch,
                         const HyperParams& hp);

// Same value plus exact reverse-mode gradients accumulated into grads.
// A frozen stream's parameter gradients are zeroed (its inputs detach).
LossBreakdown total_loss_grad(const EncoderParams& params,
                              const std::vector<TrainExample>& batch, const HyperParams& hp,
                              EncoderParams& grads, bool freeze_image_stream = false,
                              bool freeze_view_stream = false);

// Fraction of samples whose annotations contain each class.
std::map<int, double> class_frequencies(const std::vector<Sample>& samples);

struct AugmentOptions {
    bool enabled = true;
    double flip_prob = 0.5;
    double view_jitter = 0.0872664626;  // 5 degrees, for the jittered GT positive
    double brightness_lo = 0.85;        // render brightness jitter range
    double brightness_hi = 1.15;
};

// Builds the step batch for one scene: up to Q regions with ROI jitter,
// horizontal flip (pose targets adjusted via flip_pose), one jittered
// ground-truth view plus the object's canonical views as positives, and
// canonical views of other same-class catalog objects as negatives.
std::vector<TrainExample> build_examples(const Dataset& ds, const Sample& scene,
                                         const RotationBins& bins, const HyperParams& hp,
                                         const std::map<int, double>& repeat_factors,
                                         const AugmentOptions& aug, Rng& rng);

struct TrainConfig {
    HyperParams hp;
    int steps = 3000;
    int milestone1 = -1;  // negative -> 2/3 of steps
    int milestone2 = -1;  // negative -> 5/6 of steps
    int width = 16;       // encoder channel width
    AugmentOptions aug;
    bool freeze_image_stream = false;
    bool freeze_view_stream = false;
    std::uint64_t seed = 1;
    std::string trace_path;  // optional CSV: step, lr, loss terms
};

// Stepwise schedule: base rate, scaled by lr_decay at each passed milestone.
double lr_at(const TrainConfig& config, int step);

// Rotation-bin vocabulary clustered from the training-split rotations.
RotationBins bins_from_training(const Dataset& ds, int k, std::uint64_t seed);

struct TrainResult {
    EncoderParams params;
    RotationBins bins;
    std::vector<LossBreakdown> trace;  // one entry per step
};

// SGD with momentum 0.9 over scenes drawn uniformly per step. Deterministic
// given the seed. Throws std::runtime_error if the loss stops being finite.
TrainResult train(const Dataset& ds, const TrainConfig& config);

} // namespace cadre
