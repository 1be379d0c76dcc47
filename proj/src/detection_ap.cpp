#include "cadre/detection_ap.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cadre {

const std::vector<double>& coco_iou_thresholds() {
    static const std::vector<double> t = {0.50, 0.55, 0.60, 0.65, 0.70,
                                          0.75, 0.80, 0.85, 0.90, 0.95};
    return t;
}

namespace {

struct RankedPrediction {
    double confidence = 0.0;
    int image = 0; // index into the sorted image list
    int pred = 0;  // index into that image's predictions
};

double interpolated_ap101(std::vector<char>& tp_flags, int num_gt) {
    if (num_gt == 0) return 0.0;
    // precision/recall along the ranked list
    std::vector<double> precision(tp_flags.size()), recall(tp_flags.size());
    int tp = 0;
    for (std::size_t i = 0; i < tp_flags.size(); ++i) {
        tp += tp_flags[i];
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / num_gt;
    }
    double ap = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double p = 0.0;
        for (std::size_t i = 0; i < tp_flags.size(); ++i) {
            if (recall[i] >= r) p = std::max(p, precision[i]);
        }
        ap += p;
    }
    return ap / 101.0;
}

} // namespace

ApResult average_precision(const ApInput& input, double match_threshold, const MatchFn& match_fn) {
    // fixed aggregation order regardless of caller ordering
    std::vector<int> image_order(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) image_order[i] = static_cast<int>(i);
    std::sort(image_order.begin(), image_order.end(),
              [&](int a, int b) { return input[a].image_id < input[b].image_id; });

    std::set<int> classes;
    for (const ApImage& img : input) {
        for (const ApGroundTruth& gt : img.ground_truths) classes.insert(gt.class_id);
    }

    ApResult result;
    for (int cls : classes) {
        std::vector<RankedPrediction> ranked;
        int num_gt = 0;
        for (int oi : image_order) {
            const ApImage& img = input[oi];
            for (const ApGroundTruth& gt : img.ground_truths) num_gt += gt.class_id == cls;
            for (std::size_t p = 0; p < img.predictions.size(); ++p) {
                const ApPrediction& pred = img.predictions[p];
                if (pred.class_id != cls) continue;
                if (!std::isfinite(pred.confidence)) {
                    throw std::domain_error("average_precision: non-finite confidence");
                }
                ranked.push_back({pred.confidence, oi, static_cast<int>(p)});
            }
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const RankedPrediction& a, const RankedPrediction& b) {
                             return a.confidence > b.confidence;
                         });

        std::map<int, std::vector<char>> gt_used; // per image
        std::vector<char> tp_flags;
        tp_flags.reserve(ranked.size());
        for (const RankedPrediction& rp : ranked) {
            const ApImage& img = input[rp.image];
            auto& used = gt_used[rp.image];
            if (used.empty()) used.assign(img.ground_truths.size(), 0);
            int best_gt = -1;
            double best_score = -1.0;
            for (std::size_t g = 0; g < img.ground_truths.size(); ++g) {
                if (used[g] || img.ground_truths[g].class_id != cls) continue;
                const double s = match_fn(img, img.predictions[rp.pred].payload,
                                          img.ground_truths[g].payload);
                if (s >= match_threshold && s > best_score) {
                    best_score = s;
                    best_gt = static_cast<int>(g);
                }
            }
            if (best_gt >= 0) {
                used[best_gt] = 1;
                tp_flags.push_back(1);
            } else {
                tp_flags.push_back(0);
            }
        }
        result.per_class[cls] = interpolated_ap101(tp_flags, num_gt);
    }

    if (!result.per_class.empty()) {
        double sum = 0.0;
        for (const auto& [cls, ap] : result.per_class) sum += ap;
        result.mean = sum / result.per_class.size();
    }
    return result;
}

ApSweep average_precision_sweep(const ApInput& input, const MatchFn& match_fn) {
    ApSweep sweep;
    std::map<int, double> sums;
    for (double th : coco_iou_thresholds()) {
        const ApResult r = average_precision(input, th, match_fn);
        for (const auto& [cls, ap] : r.per_class) sums[cls] += ap;
        if (th == 0.50) sweep.ap50 = r;
        if (th == 0.75) sweep.ap75 = r;
    }
    for (const auto& [cls, s] : sums) sweep.ap.per_class[cls] = s / coco_iou_thresholds().size();
    if (!sweep.ap.per_class.empty()) {
        double sum = 0.0;
        for (const auto& [cls, ap] : sweep.ap.per_class) sum += ap;
        sweep.ap.mean = sum / sweep.ap.per_class.size();
    }
    return sweep;
}

ApSweep mesh_ap(const ApInput& input, const MatchFn& f1_lookup) {
    return average_precision_sweep(input, f1_lookup);
}

} // namespace cadre
