#include "cadre/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

#include "cadre/render.hpp"

namespace cadre {

namespace {

constexpr double kMomentum = 0.9;

void check_example(const EncoderConfig& cfg, const TrainExample& ex, std::size_t index) {
    const std::string where = "total_loss: example " + std::to_string(index);
    if (ex.class_id < 0 || ex.class_id >= cfg.num_classes)
        throw std::domain_error(where + ": class_id out of range");
    if (ex.target.bin_index < 0 || ex.target.bin_index >= cfg.pose_bins)
        throw std::domain_error(where + ": bin index out of range");
    if (ex.positives.empty())
        throw std::domain_error(where + ": no positive views");
    if (!(ex.weight > 0.0))
        throw std::domain_error(where + ": non-positive weight");
}

// Cross-entropy over one class's bin slice, max-shifted. Fills
// d_logits (same length as logits, scaled by `scale`) when given.
double bin_cross_entropy(const std::vector<double>& logits, int base, int bins, int truth,
                         double scale, std::vector<double>* d_logits) {
    double m = logits[base];
    for (int k = 1; k < bins; ++k) m = std::max(m, logits[base + k]);
    double sum = 0.0;
    for (int k = 0; k < bins; ++k) sum += std::exp(logits[base + k] - m);
    const double loss = std::log(sum) - (logits[base + truth] - m);
    if (d_logits) {
        for (int k = 0; k < bins; ++k) {
            const double p = std::exp(logits[base + k] - m) / sum;
            (*d_logits)[base + k] += scale * (p - (k == truth ? 1.0 : 0.0));
        }
    }
    return loss;
}

// Embeddings go through cosines and a sort; catching a blow-up here turns a
// diverged run into a clean abort instead of NaN comparisons downstream.
void ensure_finite(const std::vector<double>& values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("total_loss: non-finite ") + what +
                                     " (diverged parameters?)");
}

void zero_stream(StreamParams& s) {
    auto wipe = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    wipe(s.c1.w); wipe(s.c1.b);
    wipe(s.c2.w); wipe(s.c2.b);
    wipe(s.c3.w); wipe(s.c3.b);
    wipe(s.proj.w); wipe(s.proj.b);
}

LossBreakdown compute_loss(const EncoderParams& params, const std::vector<TrainExample>& batch,
                           const HyperParams& hp, EncoderParams* grads,
                           bool freeze_image_stream, bool freeze_view_stream) {
    if (batch.empty()) throw std::domain_error("total_loss: empty batch");
    const EncoderConfig& cfg = params.config;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossBreakdown out;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainExample& ex = batch[bi];
        check_example(cfg, ex, bi);

        // Contrastive term: anchor from the masked region, candidates from
        // the view stream, hard-mined before the loss.
        const Image masked = apply_mask(ex.features, ex.mask);
        StreamCache anchor_cache;
        const std::vector<double> anchor =
            stream_forward(params.image_stream, cfg, masked, &anchor_cache);
        ensure_finite(anchor, "region embedding");
        ensure_finite(anchor_cache.a3, "trunk feature");

        std::vector<EmbeddingVector> pos_vecs(ex.positives.size());
        std::vector<StreamCache> pos_caches(grads ? ex.positives.size() : 0);
        for (std::size_t i = 0; i < ex.positives.size(); ++i) {
            const ViewExample& v = ex.positives[i];
            pos_vecs[i].values = stream_forward(params.view_stream, cfg, v.image,
                                                grads ? &pos_caches[i] : nullptr);
            ensure_finite(pos_vecs[i].values, "view embedding");
            pos_vecs[i].tag = EmbeddingTag::ObjectView;
            pos_vecs[i].class_id = ex.class_id;
            pos_vecs[i].object_id = v.object_id;
            pos_vecs[i].view_id = v.view_id;
        }
        std::vector<EmbeddingVector> neg_vecs(ex.negatives.size());
        std::vector<StreamCache> neg_caches(grads ? ex.negatives.size() : 0);
        for (std::size_t i = 0; i < ex.negatives.size(); ++i) {
            const ViewExample& v = ex.negatives[i];
            neg_vecs[i].values = stream_forward(params.view_stream, cfg, v.image,
                                                grads ? &neg_caches[i] : nullptr);
            ensure_finite(neg_vecs[i].values, "view embedding");
            neg_vecs[i].tag = EmbeddingTag::ObjectView;
            neg_vecs[i].class_id = ex.class_id;
            neg_vecs[i].object_id = v.object_id;
            neg_vecs[i].view_id = v.view_id;
        }

        EmbeddingVector anchor_vec;
        anchor_vec.values = anchor;
        anchor_vec.tag = EmbeddingTag::ImageRegion;
        anchor_vec.class_id = ex.class_id;
        anchor_vec.object_id = ex.object_id;
        const MiningResult mined =
            mine_hard(anchor_vec, pos_vecs, neg_vecs, hp.hard_positives, hp.hard_negatives);

        std::vector<std::vector<double>> mined_pos(mined.positives.size());
        for (std::size_t i = 0; i < mined.positives.size(); ++i)
            mined_pos[i] = pos_vecs[mined.positives[i]].values;
        std::vector<std::vector<double>> mined_neg(mined.negatives.size());
        for (std::size_t i = 0; i < mined.negatives.size(); ++i)
            mined_neg[i] = neg_vecs[mined.negatives[i]].values;

        double nce = 0.0;
        std::vector<double> g_anchor;
        std::vector<std::vector<double>> g_pos, g_neg;
        if (grads) {
            nce = nce_loss_grad(anchor, mined_pos, mined_neg, hp.contrast_weight,
                                hp.temperature, g_anchor, g_pos, g_neg);
        } else {
            nce = nce_loss(anchor, mined_pos, mined_neg, hp.contrast_weight, hp.temperature);
        }
        out.embedding += ex.weight * nce * inv_b;

        // Pose and center heads read the image stream's flattened final conv
        // map; only the embedding projection goes through the pooled vector.
        const std::vector<double>& feat = anchor_cache.a3;
        const std::vector<double> logits = linear_forward(params.heads.pose_class, feat);
        const std::vector<double> reg = linear_forward(params.heads.pose_reg, feat);
        const std::vector<double> cen = linear_forward(params.heads.center, feat);
        const int cls_base = ex.class_id * cfg.pose_bins;
        const int reg_base = ex.class_id * 4;
        const int cen_base = ex.class_id * 2;

        std::vector<double> d_logits(grads ? logits.size() : 0, 0.0);
        out.pose_class += inv_b * bin_cross_entropy(logits, cls_base, cfg.pose_bins,
                                                    ex.target.bin_index,
                                                    hp.weight_pose_class * inv_b,
                                                    grads ? &d_logits : nullptr);

        std::vector<double> d_reg(grads ? reg.size() : 0, 0.0);
        if (ex.target.regress_mask) {
            const std::array<double, 4> truth = {ex.target.delta.w, ex.target.delta.x,
                                                 ex.target.delta.y, ex.target.delta.z};
            double term = 0.0;
            for (int c = 0; c < 4; ++c) {
                const double r = reg[reg_base + c] - truth[c];
                term += huber(r, hp.huber_delta);
                if (grads)
                    d_reg[reg_base + c] = hp.weight_pose_reg * inv_b * huber_grad(r, hp.huber_delta);
            }
            out.pose_reg += term * inv_b;
        }

        std::vector<double> d_cen(grads ? cen.size() : 0, 0.0);
        {
            double term = 0.0;
            for (int c = 0; c < 2; ++c) {
                const double r = cen[cen_base + c] - ex.target.center_delta[c];
                term += huber(r, hp.huber_delta);
                if (grads)
                    d_cen[cen_base + c] = hp.weight_pose_reg * inv_b * huber_grad(r, hp.huber_delta);
            }
            out.center += term * inv_b;
        }

        if (!grads) continue;

        std::vector<double> d_feat(feat.size(), 0.0);
        std::vector<double> dx(feat.size(), 0.0);
        linear_backward(params.heads.pose_class, feat, d_logits, grads->heads.pose_class, &dx);
        for (std::size_t j = 0; j < d_feat.size(); ++j) d_feat[j] += dx[j];
        linear_backward(params.heads.pose_reg, feat, d_reg, grads->heads.pose_reg, &dx);
        for (std::size_t j = 0; j < d_feat.size(); ++j) d_feat[j] += dx[j];
        linear_backward(params.heads.center, feat, d_cen, grads->heads.center, &dx);
        for (std::size_t j = 0; j < d_feat.size(); ++j) d_feat[j] += dx[j];

        const double embed_scale = hp.weight_embedding * ex.weight * inv_b;
        std::vector<double> d_embed(anchor.size(), 0.0);
        for (std::size_t j = 0; j < d_embed.size(); ++j) d_embed[j] = embed_scale * g_anchor[j];
        stream_backward(params.image_stream, cfg, anchor_cache, d_embed, {},
                        grads->image_stream, d_feat);

        std::vector<double> d_view(anchor.size(), 0.0);
        for (std::size_t i = 0; i < mined.positives.size(); ++i) {
            for (std::size_t j = 0; j < d_view.size(); ++j) d_view[j] = embed_scale * g_pos[i][j];
            stream_backward(params.view_stream, cfg, pos_caches[mined.positives[i]], d_view, {},
                            grads->view_stream);
        }
        for (std::size_t i = 0; i < mined.negatives.size(); ++i) {
            for (std::size_t j = 0; j < d_view.size(); ++j) d_view[j] = embed_scale * g_neg[i][j];
            stream_backward(params.view_stream, cfg, neg_caches[mined.negatives[i]], d_view, {},
                            grads->view_stream);
        }
    }

    out.total = hp.weight_embedding * out.embedding + hp.weight_pose_class * out.pose_class +
                hp.weight_pose_reg * (out.pose_reg + out.center);

    if (grads) {
        if (freeze_image_stream) zero_stream(grads->image_stream);
        if (freeze_view_stream) zero_stream(grads->view_stream);
    }
    return out;
}

Image maybe_brighten(const Image& img, const AugmentOptions& aug, Rng& rng) {
    if (!aug.enabled) return img;
    return adjust_brightness(img, rng.uniform(aug.brightness_lo, aug.brightness_hi));
}

} // namespace

Image mask_features(const Image& features, const Image& mask) {
    return apply_mask(features, mask);
}

EmbeddingVector encode_region(const EncoderParams& params, const Image& masked_features,
                              int class_id) {
    EmbeddingVector v;
    v.values = stream_forward(params.image_stream, params.config, masked_features, nullptr);
    v.tag = EmbeddingTag::ImageRegion;
    v.class_id = class_id;
    return v;
}

EmbeddingVector encode_view(const EncoderParams& params, const Image& view, int class_id,
                            int object_id, int view_id) {
    EmbeddingVector v;
    v.values = stream_forward(params.view_stream, params.config, view, nullptr);
    v.tag = EmbeddingTag::ObjectView;
    v.class_id = class_id;
    v.object_id = object_id;
    v.view_id = view_id;
    return v;
}

LossBreakdown total_loss(const EncoderParams& params, const std::vector<TrainExample>& batch,
                         const HyperParams& hp) {
    return compute_loss(params, batch, hp, nullptr, false, false);
}

LossBreakdown total_loss_grad(const EncoderParams& params,
                              const std::vector<TrainExample>& batch, const HyperParams& hp,
                              EncoderParams& grads, bool freeze_image_stream,
                              bool freeze_view_stream) {
    return compute_loss(params, batch, hp, &grads, freeze_image_stream, freeze_view_stream);
}

std::map<int, double> class_frequencies(const std::vector<Sample>& samples) {
    std::map<int, double> freq;
    if (samples.empty()) return freq;
    for (const Sample& s : samples) {
        std::set<int> present;
        for (const DetectionRegion& r : s.regions) present.insert(r.class_id);
        for (int c : present) freq[c] += 1.0;
    }
    for (auto& [c, count] : freq) count /= static_cast<double>(samples.size());
    return freq;
}

std::vector<TrainExample> build_examples(const Dataset& ds, const Sample& scene,
                                         const RotationBins& bins, const HyperParams& hp,
                                         const std::map<int, double>& repeat_factors,
                                         const AugmentOptions& aug, Rng& rng) {
    if (scene.regions.size() != scene.truths.size())
        throw std::invalid_argument("build_examples: regions and truths differ in length");

    // Keep every region when the scene fits the budget; otherwise draw a
    // uniform subset of Q, preserving no particular order.
    std::vector<std::size_t> order(scene.regions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t budget = static_cast<std::size_t>(hp.regions_per_image);
    if (order.size() > budget) {
        for (std::size_t i = 0; i < budget; ++i) {
            const std::size_t j = i + rng.uniform_index(order.size() - i);
            std::swap(order[i], order[j]);
        }
        order.resize(budget);
    }

    std::vector<TrainExample> out;
    out.reserve(order.size());
    for (std::size_t ri : order) {
        const DetectionRegion& region = scene.regions[ri];
        const GroundTruth& gt = scene.truths[ri];
        const CadEntry& entry = ds.entries.at(static_cast<std::size_t>(gt.object_id));

        TrainExample ex;
        ex.class_id = region.class_id;
        ex.object_id = gt.object_id;

        Box box = region.box;
        if (aug.enabled && hp.roi_jitter > 0.0) {
            const double w = box.width(), h = box.height();
            box.x0 += hp.roi_jitter * w * rng.uniform(-1.0, 1.0);
            box.y0 += hp.roi_jitter * h * rng.uniform(-1.0, 1.0);
            box.x1 += hp.roi_jitter * w * rng.uniform(-1.0, 1.0);
            box.y1 += hp.roi_jitter * h * rng.uniform(-1.0, 1.0);
        }
        DetectionRegion reboxed =
            build_region(scene.image, gt.scene_mask, box, region.class_id, ds.spec.roi_resolution);
        ex.features = std::move(reboxed.features);
        ex.mask = std::move(reboxed.mask);

        Pose pose = gt.pose;
        std::array<double, 2> center_delta = encode_center(box, {gt.center_u, gt.center_v});
        const bool flipped = aug.enabled && rng.uniform() < aug.flip_prob;
        if (flipped) {
            ex.features = hflip(ex.features);
            ex.mask = hflip(ex.mask);
            auto [fp, fc] = flip_pose(pose, center_delta);
            pose = fp;
            center_delta = fc;
        }
        ex.target = encode_rotation(pose.rotation, bins, ex.class_id, hp.theta_gate);
        ex.target.center_delta = center_delta;

        const auto rf = repeat_factors.find(ex.class_id);
        ex.weight = rf == repeat_factors.end() ? 1.0 : rf->second;

        // Positives: a render at (or jittered around) the target rotation,
        // then a small random draw of the object's canonical views. The fresh
        // render gets the next view id past the canonicals so mining
        // tie-breaks stay unique.
        Image gt_view;
        if (aug.enabled) {
            gt_view = jittered_gt_view(entry.mesh, pose.rotation, aug.view_jitter,
                                       rng.next_u64(), ds.spec.view_resolution)
                          .image;
        } else {
            gt_view = render_view(entry.mesh, pose.rotation, ds.spec.view_resolution);
            quantize_to_byte_grid(gt_view);
        }
        ex.positives.push_back(
            {std::move(gt_view), gt.object_id, static_cast<int>(entry.view_renders.size())});
        std::vector<std::size_t> vorder(entry.view_renders.size());
        std::iota(vorder.begin(), vorder.end(), std::size_t{0});
        const std::size_t vpicks = std::min<std::size_t>(
            vorder.size(), static_cast<std::size_t>(std::max(0, hp.positive_views)));
        for (std::size_t i = 0; i < vpicks; ++i) {
            const std::size_t j = i + rng.uniform_index(vorder.size() - i);
            std::swap(vorder[i], vorder[j]);
        }
        for (std::size_t i = 0; i < vpicks; ++i)
            ex.positives.push_back({maybe_brighten(entry.view_renders[vorder[i]], aug, rng),
                                    gt.object_id, static_cast<int>(vorder[i])});

        // Negatives: canonical views of other catalog objects of the same
        // class (two distinct views each, up to six objects).
        std::vector<int> others;
        for (int id : ds.train_objects)
            if (id != gt.object_id &&
                ds.entries[static_cast<std::size_t>(id)].class_id == ex.class_id)
                others.push_back(id);
        const std::size_t picks = std::min<std::size_t>(others.size(), 6);
        for (std::size_t i = 0; i < picks; ++i) {
            const std::size_t j = i + rng.uniform_index(others.size() - i);
            std::swap(others[i], others[j]);
        }
        for (std::size_t i = 0; i < picks; ++i) {
            const CadEntry& neg = ds.entries[static_cast<std::size_t>(others[i])];
            const std::size_t n_views = neg.view_renders.size();
            const std::size_t v1 = rng.uniform_index(n_views);
            std::size_t v2 = v1;
            if (n_views > 1) v2 = (v1 + 1 + rng.uniform_index(n_views - 1)) % n_views;
            ex.negatives.push_back({maybe_brighten(neg.view_renders[v1], aug, rng), others[i],
                                    static_cast<int>(v1)});
            if (v2 != v1)
                ex.negatives.push_back({maybe_brighten(neg.view_renders[v2], aug, rng), others[i],
                                        static_cast<int>(v2)});
        }

        out.push_back(std::move(ex));
    }
    return out;
}

double lr_at(const TrainConfig& config, int step) {
    const int m1 = config.milestone1 >= 0 ? config.milestone1 : (2 * config.steps) / 3;
    const int m2 = config.milestone2 >= 0 ? config.milestone2 : (5 * config.steps) / 6;
    double lr = config.hp.learning_rate;
    if (step >= m1) lr *= config.hp.lr_decay;
    if (step >= m2) lr *= config.hp.lr_decay;
    return lr;
}

RotationBins bins_from_training(const Dataset& ds, int k, std::uint64_t seed) {
    std::map<int, std::vector<Quaternion>> rotations;
    for (const Sample& s : ds.train)
        for (std::size_t i = 0; i < s.regions.size(); ++i)
            rotations[s.regions[i].class_id].push_back(s.truths[i].pose.rotation);
    return build_bins(rotations, k, seed);
}

TrainResult train(const Dataset& ds, const TrainConfig& config) {
    if (ds.train.empty()) throw std::domain_error("train: dataset has no training scenes");
    if (config.steps < 0) throw std::domain_error("train: negative step count");
    if (config.steps > 0) {
        const int m1 = config.milestone1 >= 0 ? config.milestone1 : (2 * config.steps) / 3;
        const int m2 = config.milestone2 >= 0 ? config.milestone2 : (5 * config.steps) / 6;
        if (m1 > m2 || m2 >= config.steps)
            throw std::domain_error("train: milestones must be ordered and below the step count");
    }
    const HyperParams& hp = config.hp;

    TrainResult result;
    result.bins = bins_from_training(ds, hp.rotation_bins, config.seed);

    if (config.width < 1) throw std::domain_error("train: width must be >= 1");
    EncoderConfig ec;
    ec.input_size = ds.spec.roi_resolution;
    ec.width = config.width;
    ec.embed_dim = hp.embedding_dim;
    ec.num_classes = ds.spec.num_classes;
    ec.pose_bins = hp.rotation_bins;
    result.params = init_encoder(ec, config.seed);

    std::ofstream trace_file;
    if (!config.trace_path.empty()) {
        trace_file.open(config.trace_path);
        if (!trace_file)
            throw std::runtime_error("train: cannot open trace file " + config.trace_path);
        trace_file << "step,lr,total,embedding,pose_class,pose_reg,center\n";
        trace_file.precision(17);
    }
    if (config.steps == 0) return result;

    std::map<int, double> repeat;
    for (const auto& [cls, freq] : class_frequencies(ds.train))
        repeat[cls] = repeat_factor(freq, hp.repeat_threshold);

    EncoderParams velocity = zero_like(result.params);
    EncoderParams grads = zero_like(result.params);
    const std::vector<std::vector<double>*> p_tensors = parameter_tensors(result.params);
    const std::vector<std::vector<double>*> v_tensors = parameter_tensors(velocity);
    const std::vector<std::vector<double>*> g_tensors = parameter_tensors(grads);

    Rng master(config.seed);
    result.trace.reserve(static_cast<std::size_t>(config.steps));
    for (int step = 0; step < config.steps; ++step) {
        Rng step_rng = master.fork(static_cast<std::uint64_t>(step));
        const Sample& scene = ds.train[step_rng.uniform_index(ds.train.size())];
        const std::vector<TrainExample> batch =
            build_examples(ds, scene, result.bins, hp, repeat, config.aug, step_rng);

        for (std::vector<double>* g : g_tensors) std::fill(g->begin(), g->end(), 0.0);
        LossBreakdown lb;
        try {
            lb = total_loss_grad(result.params, batch, hp, grads, config.freeze_image_stream,
                                 config.freeze_view_stream);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("train: aborted at step " + std::to_string(step) +
                                     " on scene " + scene.name + ": " + e.what());
        }
        if (!std::isfinite(lb.total))
            throw std::runtime_error("train: loss became non-finite at step " +
                                     std::to_string(step) + " on scene " + scene.name);

        const double lr = lr_at(config, step);
        for (std::size_t t = 0; t < p_tensors.size(); ++t) {
            std::vector<double>& p = *p_tensors[t];
            std::vector<double>& v = *v_tensors[t];
            const std::vector<double>& g = *g_tensors[t];
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = kMomentum * v[j] - lr * g[j];
                p[j] += v[j];
            }
        }

        result.trace.push_back(lb);
        if (trace_file)
            trace_file << step << ',' << lr << ',' << lb.total << ',' << lb.embedding << ','
                       << lb.pose_class << ',' << lb.pose_reg << ',' << lb.center << '\n';
    }
    return result;
}

} // namespace cadre
