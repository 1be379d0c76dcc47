#include "cadre/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cadre/learner.hpp"
#include "cadre/point_metrics.hpp"
#include "cadre/render.hpp"
#include "cadre/sampling.hpp"

namespace cadre {

std::vector<EmbeddingVector> view_embeddings(const EncoderParams& params, const Dataset& ds,
                                             bool include_unseen) {
    std::vector<EmbeddingVector> out;
    auto add_object = [&](int oid) {
        const CadEntry& entry = ds.entries.at(static_cast<std::size_t>(oid));
        for (std::size_t v = 0; v < entry.view_renders.size(); ++v)
            out.push_back(encode_view(params, entry.view_renders[v], entry.class_id,
                                      entry.object_id, static_cast<int>(v)));
    };
    for (int oid : ds.train_objects) add_object(oid);
    if (include_unseen)
        for (int oid : ds.unseen_objects) add_object(oid);
    return out;
}

EmbeddingIndex build_view_index(const EncoderParams& params, const Dataset& ds,
                                bool include_unseen) {
    return EmbeddingIndex(view_embeddings(params, ds, include_unseen));
}

std::vector<EmbeddingVector> region_embeddings(const EncoderParams& params,
                                               const std::vector<Sample>& samples) {
    std::vector<EmbeddingVector> out;
    for (const Sample& s : samples) {
        if (s.regions.size() != s.truths.size())
            throw std::invalid_argument("region_embeddings: regions/truths length mismatch");
        for (std::size_t r = 0; r < s.regions.size(); ++r) {
            const DetectionRegion& region = s.regions[r];
            EmbeddingVector ev = encode_region(
                params, mask_features(region.features, region.mask), region.class_id);
            ev.object_id = s.truths[r].object_id;
            ev.view_id = static_cast<int>(r);
            out.push_back(std::move(ev));
        }
    }
    return out;
}

namespace {

constexpr std::pair<Ablation, const char*> kAblationNames[] = {
    {Ablation::None, "none"},
    {Ablation::GtShape, "gt-shape"},
    {Ablation::GtRotation, "gt-rotation"},
    {Ablation::GtTranslation, "gt-translation"},
    {Ablation::GtBox, "gt-box"},
    {Ablation::AllGt, "all-gt"},
};

} // namespace

Ablation ablation_from_name(const std::string& name) {
    for (const auto& [a, n] : kAblationNames)
        if (name == n) return a;
    throw std::invalid_argument(
        "ablation: unknown name '" + name +
        "' (expected none|gt-shape|gt-rotation|gt-translation|gt-box|all-gt)");
}

std::string ablation_name(Ablation a) {
    for (const auto& [ab, n] : kAblationNames)
        if (ab == a) return n;
    throw std::invalid_argument("ablation: unknown enum value");
}

RegionPrediction predict_region(const EncoderParams& params, const RotationBins& bins,
                                const EmbeddingIndex& index, const DetectionRegion& region,
                                const CameraIntrinsics& intr, double depth, const Vec3& scale) {
    if (region.class_id < 0 || region.class_id >= params.config.num_classes)
        throw std::domain_error("predict_region: class id outside encoder range");
    StreamCache cache;
    std::vector<double> embed =
        stream_forward(params.image_stream, params.config,
                       mask_features(region.features, region.mask), &cache);
    auto scored = index.retrieve_scored(embed, region.class_id, 1);

    const int k = params.config.pose_bins;
    const std::vector<double>& feat = cache.a3;  // heads read the pre-pool map
    std::vector<double> logits = linear_forward(params.heads.pose_class, feat);
    const int base = region.class_id * k;
    int bin = 0;
    for (int b = 1; b < k; ++b)
        if (logits[static_cast<std::size_t>(base + b)] >
            logits[static_cast<std::size_t>(base + bin)])
            bin = b;
    std::vector<double> reg = linear_forward(params.heads.pose_reg, feat);
    const std::size_t rbase = static_cast<std::size_t>(region.class_id) * 4;
    std::array<double, 4> delta{reg[rbase], reg[rbase + 1], reg[rbase + 2], reg[rbase + 3]};
    std::vector<double> cen = linear_forward(params.heads.center, feat);
    const std::size_t cbase = static_cast<std::size_t>(region.class_id) * 2;

    RegionPrediction p;
    p.class_id = region.class_id;
    p.object_id = scored[0].object_id;
    p.view_id = scored[0].view_id;
    p.similarity = scored[0].score;
    p.bin_index = bin;
    p.pose.rotation = decode_rotation(bin, delta, bins, region.class_id);
    p.center_px = decode_center(region.box, {cen[cbase], cen[cbase + 1]});
    p.pose.translation = lift_center(p.center_px, depth, intr);
    p.pose.scale = scale;
    p.box = region.box;
    return p;
}

std::vector<RegionPrediction> predict_sample(const EncoderParams& params,
                                             const RotationBins& bins,
                                             const EmbeddingIndex& index, const Sample& sample,
                                             const CameraIntrinsics& intr) {
    if (sample.regions.size() != sample.truths.size())
        throw std::invalid_argument("predict_sample: regions/truths length mismatch");
    std::vector<RegionPrediction> out;
    out.reserve(sample.regions.size());
    for (std::size_t r = 0; r < sample.regions.size(); ++r) {
        const Pose& truth = sample.truths[r].pose;
        out.push_back(predict_region(params, bins, index, sample.regions[r], intr,
                                     truth.translation[2], truth.scale));
    }
    return out;
}

void apply_ablation(std::vector<RegionPrediction>& preds, const Sample& sample, Ablation a) {
    if (preds.size() != sample.truths.size())
        throw std::invalid_argument("apply_ablation: predictions/truths length mismatch");
    if (a == Ablation::None || a == Ablation::GtBox) return;  // detections are GT boxes already
    const bool shape = a == Ablation::GtShape || a == Ablation::AllGt;
    const bool rot = a == Ablation::GtRotation || a == Ablation::AllGt;
    const bool trans = a == Ablation::GtTranslation || a == Ablation::AllGt;
    for (std::size_t r = 0; r < preds.size(); ++r) {
        const GroundTruth& gt = sample.truths[r];
        if (shape) preds[r].object_id = gt.object_id;
        if (rot) preds[r].pose.rotation = gt.pose.rotation;
        if (trans) {
            preds[r].pose.translation = gt.pose.translation;
            preds[r].center_px = {gt.center_u, gt.center_v};
        }
    }
}

namespace {

// Everything eval needs to keep per image after the heavy work is done:
// the predictions, flattened pred x gt score matrices, and per-region rows.
struct ImageEval {
    std::vector<RegionPrediction> preds;
    std::vector<double> iou_box, iou_mask, pair_f1;  // [p * regions + g]
    std::vector<ShapeScore> shape;                   // region vs its own truth
    std::vector<double> rotation_deg;
    int top1_hits = 0;
};

std::vector<std::uint8_t> mask_bytes(const Image& img) {
    std::vector<std::uint8_t> m(img.pixels.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.pixels[i] > 0.5 ? 1 : 0;
    return m;
}

PointCloud scale_points(const PointCloud& cloud, double factor) {
    PointCloud out = cloud;  // unit normals are invariant under uniform scaling
    for (Vec3& p : out.points) {
        p[0] *= factor;
        p[1] *= factor;
        p[2] *= factor;
    }
    return out;
}

ImageEval eval_image(const EncoderParams& params, const RotationBins& bins,
                     const EmbeddingIndex& index, const Dataset& ds, const Sample& sample,
                     int image_id, const EvalOptions& opts) {
    ImageEval ev;
    ev.preds = predict_sample(params, bins, index, sample, ds.intrinsics);
    apply_ablation(ev.preds, sample, opts.ablation);
    const std::size_t n = ev.preds.size();

    Rng base(opts.seed);
    Rng rng = base.fork(static_cast<std::uint64_t>(image_id));

    std::vector<TriMesh> pred_mesh(n), gt_mesh(n);
    std::vector<PointCloud> pred_cloud(n), gt_cloud(n);
    std::vector<std::vector<std::uint8_t>> pred_mask(n), gt_mask(n);
    for (std::size_t r = 0; r < n; ++r) {
        const CadEntry& pe = ds.entries.at(static_cast<std::size_t>(ev.preds[r].object_id));
        const CadEntry& ge = ds.entries.at(static_cast<std::size_t>(sample.truths[r].object_id));
        pred_mesh[r] = apply_pose(ev.preds[r].pose, pe.mesh);
        gt_mesh[r] = apply_pose(sample.truths[r].pose, ge.mesh);
        // One seed per region, shared by both clouds: identical meshes then
        // sample identically, so a perfect prediction scores exactly perfect.
        const std::uint64_t cloud_seed = rng.next_u64();
        pred_cloud[r] = sample_surface(pred_mesh[r], opts.sample_points, cloud_seed);
        gt_cloud[r] = sample_surface(gt_mesh[r], opts.sample_points, cloud_seed);
        pred_mask[r] = mask_bytes(render_mask(pe.mesh, ev.preds[r].pose, ds.intrinsics,
                                              sample.image.width, sample.image.height));
        gt_mask[r] = mask_bytes(sample.truths[r].scene_mask);
    }

    ev.iou_box.assign(n * n, 0.0);
    ev.iou_mask.assign(n * n, 0.0);
    ev.pair_f1.assign(n * n, 0.0);
    for (std::size_t g = 0; g < n; ++g) {
        const double edge = bounding_box(gt_mesh[g]).longest_edge();
        if (!(edge > 0.0))
            throw std::domain_error("evaluate: ground-truth mesh has zero extent");
        const double factor = 10.0 / edge;
        const PointCloud gt_scaled = scale_points(gt_cloud[g], factor);
        for (std::size_t p = 0; p < n; ++p) {
            ev.iou_box[p * n + g] = box_iou(ev.preds[p].box, sample.regions[g].box);
            ev.iou_mask[p * n + g] = mask_iou(pred_mask[p], gt_mask[g]);
            if (ev.preds[p].class_id == sample.regions[g].class_id)
                ev.pair_f1[p * n + g] = f1_at(gt_scaled, scale_points(pred_cloud[p], factor),
                                              opts.mesh_f1_threshold);
        }
    }

    for (std::size_t r = 0; r < n; ++r) {
        NormalizedPair np = normalize_scale(gt_mesh[r], pred_mesh[r]);
        const std::uint64_t pair_seed = rng.next_u64();
        PointCloud a = sample_surface(np.gt, opts.sample_points, pair_seed);
        PointCloud b = sample_surface(np.pred, opts.sample_points, pair_seed);
        ev.shape.push_back(shape_score(a, b, opts.f1_thresholds));
        ev.rotation_deg.push_back(quat_geodesic(ev.preds[r].pose.rotation,
                                                sample.truths[r].pose.rotation) *
                                  180.0 / M_PI);
        ev.top1_hits += ev.preds[r].object_id == sample.truths[r].object_id ? 1 : 0;
    }
    return ev;
}

} // namespace

EvalReport evaluate(const EncoderParams& params, const RotationBins& bins, const Dataset& ds,
                    const std::vector<Sample>& samples, const EvalOptions& opts) {
    if (opts.sample_points < 1) throw std::domain_error("evaluate: sample_points must be >= 1");
    EmbeddingIndex index = build_view_index(params, ds, opts.include_unseen_index);
    const int n = static_cast<int>(samples.size());
    std::vector<ImageEval> per(static_cast<std::size_t>(n));

    const int jobs = std::max(1, opts.jobs);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (int i = 0; i < n; ++i) {
        try {
            per[static_cast<std::size_t>(i)] =
                eval_image(params, bins, index, ds, samples[static_cast<std::size_t>(i)], i, opts);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    ApInput input;
    input.reserve(per.size());
    for (int i = 0; i < n; ++i) {
        const ImageEval& ev = per[static_cast<std::size_t>(i)];
        ApImage img;
        img.image_id = i;
        for (std::size_t p = 0; p < ev.preds.size(); ++p)
            img.predictions.push_back(
                {ev.preds[p].class_id, ev.preds[p].similarity, static_cast<int>(p)});
        for (std::size_t g = 0; g < ev.preds.size(); ++g)
            img.ground_truths.push_back(
                {samples[static_cast<std::size_t>(i)].regions[g].class_id, static_cast<int>(g)});
        input.push_back(std::move(img));
    }
    auto matrix = [&per](const std::vector<double> ImageEval::*m) {
        return [&per, m](const ApImage& img, int p, int g) {
            const ImageEval& ev = per[static_cast<std::size_t>(img.image_id)];
            return (ev.*m)[static_cast<std::size_t>(p) * ev.preds.size() +
                           static_cast<std::size_t>(g)];
        };
    };

    EvalReport report;
    report.box_ap = average_precision_sweep(input, matrix(&ImageEval::iou_box));
    report.mask_ap = average_precision_sweep(input, matrix(&ImageEval::iou_mask));
    report.mesh_ap = mesh_ap(input, matrix(&ImageEval::pair_f1));

    std::vector<double> rotations;
    double chamfer_sum = 0.0, nc_sum = 0.0;
    std::map<double, double> f1_sum;
    for (double t : opts.f1_thresholds) f1_sum[t] = 0.0;
    int regions = 0, top1 = 0;
    for (const ImageEval& ev : per) {
        for (const ShapeScore& ss : ev.shape) {
            chamfer_sum += ss.chamfer;
            nc_sum += ss.normal_consistency;
            for (const auto& [t, v] : ss.f1_at) f1_sum[t] += v;
        }
        rotations.insert(rotations.end(), ev.rotation_deg.begin(), ev.rotation_deg.end());
        regions += static_cast<int>(ev.preds.size());
        top1 += ev.top1_hits;
    }
    if (regions > 0) {
        report.mean_chamfer = chamfer_sum / regions;
        report.mean_normal_consistency = nc_sum / regions;
        for (const auto& [t, v] : f1_sum) report.mean_f1[t] = v / regions;
        report.retrieval_top1 = static_cast<double>(top1) / regions;
        std::sort(rotations.begin(), rotations.end());
        const std::size_t mid = rotations.size() / 2;
        report.median_rotation_deg = rotations.size() % 2 == 1
                                         ? rotations[mid]
                                         : 0.5 * (rotations[mid - 1] + rotations[mid]);
    } else {
        for (double t : opts.f1_thresholds) report.mean_f1[t] = 0.0;
    }
    report.num_images = n;
    report.num_regions = regions;
    report.index_entries = index.size();
    return report;
}

namespace {

std::string class_label(const Dataset& ds, int class_id) {
    if (class_id >= 0 && class_id < static_cast<int>(ds.class_names.size()))
        return ds.class_names[static_cast<std::size_t>(class_id)];
    return "class_" + std::to_string(class_id);
}

std::string threshold_key(double t) {
    std::ostringstream out;
    out << t;
    return out.str();
}

nlohmann::json sweep_json(const ApSweep& sweep, const Dataset& ds) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [cid, ap] : sweep.ap.per_class)
        per[class_label(ds, cid)] = {{"ap", ap},
                                     {"ap50", sweep.ap50.per_class.at(cid)},
                                     {"ap75", sweep.ap75.per_class.at(cid)}};
    return {{"ap", sweep.ap.mean},
            {"ap50", sweep.ap50.mean},
            {"ap75", sweep.ap75.mean},
            {"per_class", per}};
}

} // namespace

std::string eval_report_json(const EvalReport& report, const Dataset& ds,
                             const EvalOptions& opts, const std::string& split_name) {
    nlohmann::json j;
    j["format"] = "cadre-eval-v1";
    j["split"] = split_name;
    j["ablation"] = ablation_name(opts.ablation);
    j["index"] = {{"entries", report.index_entries},
                  {"include_unseen", opts.include_unseen_index}};
    j["num_images"] = report.num_images;
    j["num_regions"] = report.num_regions;
    j["sample_points"] = opts.sample_points;
    j["mesh_f1_threshold"] = opts.mesh_f1_threshold;
    j["seed"] = opts.seed;
    j["retrieval_top1"] = report.retrieval_top1;
    j["rotation_median_deg"] = report.median_rotation_deg;
    j["ap_box"] = sweep_json(report.box_ap, ds);
    j["ap_mask"] = sweep_json(report.mask_ap, ds);
    j["ap_mesh"] = sweep_json(report.mesh_ap, ds);
    nlohmann::json f1 = nlohmann::json::object();
    for (const auto& [t, v] : report.mean_f1) f1[threshold_key(t)] = v;
    j["shape"] = {{"chamfer", report.mean_chamfer},
                  {"normal_consistency", report.mean_normal_consistency},
                  {"f1", f1}};
    return j.dump(2) + "\n";
}

} // namespace cadre
