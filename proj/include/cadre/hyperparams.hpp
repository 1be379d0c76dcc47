#pragma once

#include <cmath>

namespace cadre {

// Training/model constants. Defaults are the published operating point; the
// acceptance suite asserts them, so change call sites, not these numbers.
struct HyperParams {
    double temperature = 0.15;       // tau in the contrastive similarity
    double contrast_weight = 1.5;    // C, weight on the negative mass
    double huber_delta = 0.15;       // regression margin
    int rotation_bins = 16;          // K per class
    double theta_gate = M_PI / 6.0;  // refine only within this geodesic angle
    int canonical_views = 16;        // k renders per object
    int positive_views = 3;          // canonical views drawn per anchor
    int regions_per_image = 8;       // Q
    int hard_positives = 32;         // P_h = 4Q
    int hard_negatives = 128;        // N_h = 16Q
    double repeat_threshold = 0.1;   // t in the inverse-sqrt rebalancing
    int retrieval_k = 1;             // N_k nearest neighbors at test time
    double weight_embedding = 0.5;
    double weight_pose_class = 0.25;
    double weight_pose_reg = 5.0;
    double learning_rate = 0.08;     // decays by 0.1 at the two milestones
    double lr_decay = 0.1;
    double roi_jitter = 0.025;       // box corner noise as a fraction of size
    int embedding_dim = 128;
};

} // namespace cadre
