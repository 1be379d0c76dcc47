#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadre/dataset.hpp"
#include "cadre/learner.hpp"
#include "cadre/mesh.hpp"
#include "cadre/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cadre;

namespace {

// Bad flags, bad config files, bad paths, and bad splits exit with 2;
// failures during the actual work (diverged training, IO mid-run) exit 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_dir(const std::string& path, const std::string& what) {
    if (!fs::is_directory(path)) throw ConfigError(what + " directory not found: " + path);
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw ConfigError(what + " file not found: " + path);
}

void prepare_out(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory: " + out);
}

// One config file for the whole tool: a top-level `config_version=1` line
// plus one `[subcommand]` section per command whose keys are the long flag
// names. Unknown keys are rejected; command-line flags win over file values.
struct CommonOpts {
    int config_version = 0;
    CLI::Option* config_opt = nullptr;
};

void add_config(CLI::App& app, CommonOpts& common) {
    common.config_opt = app.set_config(
        "--config", "",
        "key=value config file: config_version=1 at the top, then [subcommand] "
        "sections of long-flag keys; unknown keys are rejected");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.add_option("--config_version", common.config_version,
                   "config schema version; required (=1) when --config is used");
}

void check_config_version(const CommonOpts& common) {
    if (common.config_opt != nullptr && common.config_opt->count() > 0 &&
        common.config_version != 1)
        throw ConfigError("config file must set config_version=1");
}

const std::vector<Sample>& split_by_name(const Dataset& ds, const std::string& name) {
    if (name == "train") return ds.train;
    if (name == "val") return ds.val;
    if (name == "unseen") return ds.unseen;
    throw ConfigError("unknown split '" + name + "' (expected train|val|unseen)");
}

const Sample* find_sample(const Dataset& ds, const std::string& name) {
    for (const auto* split : {&ds.train, &ds.val, &ds.unseen})
        for (const Sample& s : *split)
            if (s.name == name) return &s;
    return nullptr;
}

std::string class_label(const Dataset& ds, int class_id) {
    if (class_id >= 0 && class_id < static_cast<int>(ds.class_names.size()))
        return ds.class_names[static_cast<std::size_t>(class_id)];
    return "class_" + std::to_string(class_id);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path);
}

// ---- gen-data ----------------------------------------------------------

struct GenDataOpts {
    std::string out;
    DatasetSpec spec;
};

void setup_gen_data(CLI::App& app, GenDataOpts& o, const CommonOpts& common) {
    CLI::App* sub =
        app.add_subcommand("gen-data", "Generate the procedural desk-scale dataset");
    sub->add_option("--out", o.out, "output dataset directory")->required();
    sub->add_option("--classes", o.spec.num_classes, "object classes (>= 2)")->capture_default_str();
    sub->add_option("--objects-per-class", o.spec.objects_per_class,
                    "CAD objects per class (>= 4)")->capture_default_str();
    sub->add_option("--unseen-per-class", o.spec.unseen_per_class,
                    "objects per class held out of train scenes and index")->capture_default_str();
    sub->add_option("--train-scenes", o.spec.train_scenes, "training scene count")->capture_default_str();
    sub->add_option("--val-scenes", o.spec.val_scenes, "validation scene count")->capture_default_str();
    sub->add_option("--unseen-scenes", o.spec.unseen_scenes,
                    "scenes built from held-out objects")->capture_default_str();
    sub->add_option("--max-objects", o.spec.max_objects_per_scene,
                    "max objects per scene")->capture_default_str();
    sub->add_option("--scene-size", o.spec.scene_size, "scene image side in pixels")->capture_default_str();
    sub->add_option("--focal", o.spec.focal, "pinhole focal length in pixels")->capture_default_str();
    sub->add_option("--view-count", o.spec.view_count, "canonical views per class")->capture_default_str();
    sub->add_option("--view-resolution", o.spec.view_resolution,
                    "CAD view render side in pixels")->capture_default_str();
    sub->add_option("--roi-resolution", o.spec.roi_resolution,
                    "region crop side in pixels")->capture_default_str();
    sub->add_option("--seed", o.spec.seed, "generation seed")->capture_default_str();
    sub->fallthrough();
    sub->callback([&o, &common] {
        check_config_version(common);
        prepare_out(o.out);
        Dataset ds = generate_dataset(o.spec);
        save_dataset(o.out, ds);
        std::cout << "wrote dataset to " << o.out << " (" << ds.entries.size() << " objects, "
                  << ds.train.size() << "/" << ds.val.size() << "/" << ds.unseen.size()
                  << " train/val/unseen scenes)\n";
    });
}

// ---- train --------------------------------------------------------------

struct TrainOpts {
    std::string data, out;
    TrainConfig cfg;
    bool no_augment = false;
};

void setup_train(CLI::App& app, TrainOpts& o, const CommonOpts& common) {
    CLI::App* sub = app.add_subcommand(
        "train", "Train the joint region/view embedding and pose heads");
    sub->add_option("--data", o.data, "dataset directory from gen-data")->required();
    sub->add_option("--out", o.out,
                    "output directory for checkpoint.bin, bins.json, trace.csv")
        ->required();
    sub->add_option("--steps", o.cfg.steps, "SGD steps")->capture_default_str();
    sub->add_option("--seed", o.cfg.seed, "training seed")->capture_default_str();
    sub->add_option("--width", o.cfg.width, "encoder channel width")->capture_default_str();
    sub->add_option("--milestone1", o.cfg.milestone1,
                    "first lr-decay step (negative = 2/3 of steps)")->capture_default_str();
    sub->add_option("--milestone2", o.cfg.milestone2,
                    "second lr-decay step (negative = 5/6 of steps)")->capture_default_str();
    HyperParams& hp = o.cfg.hp;
    sub->add_option("--learning-rate", hp.learning_rate, "base learning rate")->capture_default_str();
    sub->add_option("--lr-decay", hp.lr_decay, "decay factor at each milestone")->capture_default_str();
    sub->add_option("--temperature", hp.temperature, "cosine similarity temperature")->capture_default_str();
    sub->add_option("--contrast-weight", hp.contrast_weight,
                    "negative-term weight C in the contrastive loss")->capture_default_str();
    sub->add_option("--huber-delta", hp.huber_delta, "Huber margin for pose regression")->capture_default_str();
    sub->add_option("--rotation-bins", hp.rotation_bins, "rotation bins per class")->capture_default_str();
    sub->add_option("--theta-gate", hp.theta_gate,
                    "max bin geodesic (radians) that trains the delta head")->capture_default_str();
    sub->add_option("--regions-per-image", hp.regions_per_image,
                    "training regions drawn per scene")->capture_default_str();
    sub->add_option("--hard-positives", hp.hard_positives, "mined positives cap")->capture_default_str();
    sub->add_option("--hard-negatives", hp.hard_negatives, "mined negatives cap")->capture_default_str();
    sub->add_option("--repeat-threshold", hp.repeat_threshold,
                    "class-rebalancing frequency threshold")->capture_default_str();
    sub->add_option("--weight-embedding", hp.weight_embedding, "embedding loss weight")->capture_default_str();
    sub->add_option("--weight-pose-class", hp.weight_pose_class,
                    "rotation-bin classification weight")->capture_default_str();
    sub->add_option("--weight-pose-reg", hp.weight_pose_reg,
                    "rotation delta / center regression weight")->capture_default_str();
    sub->add_option("--roi-jitter", hp.roi_jitter, "box jitter fraction during training")->capture_default_str();
    sub->add_option("--embedding-dim", hp.embedding_dim, "embedding dimensionality")->capture_default_str();
    sub->add_flag("--no-augment", o.no_augment,
                  "disable flips, view jitter, brightness, and box jitter");
    sub->add_flag("--freeze-image-stream", o.cfg.freeze_image_stream,
                  "zero image-stream gradients");
    sub->add_flag("--freeze-view-stream", o.cfg.freeze_view_stream,
                  "zero view-stream gradients");
    sub->fallthrough();
    sub->callback([&o, &common] {
        check_config_version(common);
        require_dir(o.data, "dataset");
        prepare_out(o.out);
        o.cfg.aug.enabled = !o.no_augment;
        o.cfg.trace_path = o.out + "/trace.csv";
        Dataset ds = load_dataset(o.data);
        TrainResult res = train(ds, o.cfg);
        save_checkpoint(o.out + "/checkpoint.bin", res.params);
        save_bins(o.out + "/bins.json", res.bins);
        std::cout << "trained " << o.cfg.steps << " steps";
        if (!res.trace.empty())
            std::cout << "; final loss " << std::setprecision(6) << res.trace.back().total;
        std::cout << "; wrote " << o.out << "/checkpoint.bin, bins.json, trace.csv\n";
    });
}

// ---- eval ---------------------------------------------------------------

struct EvalCmdOpts {
    std::string data, checkpoint, bins, out;
    std::string split = "val";
    std::string ablation = "none";
    EvalOptions opts;
};

void setup_eval(CLI::App& app, EvalCmdOpts& o, const CommonOpts& common) {
    CLI::App* sub = app.add_subcommand(
        "eval", "Evaluate a checkpoint: retrieval + pose decode + metric report");
    sub->add_option("--data", o.data, "dataset directory")->required();
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint.bin from train")->required();
    sub->add_option("--bins", o.bins, "bins.json from train")->required();
    sub->add_option("--out", o.out, "output directory for metrics.json")->required();
    sub->add_option("--split", o.split, "train|val|unseen")->capture_default_str();
    sub->add_option("--ablation", o.ablation,
                    "none|gt-shape|gt-rotation|gt-translation|gt-box|all-gt")->capture_default_str();
    sub->add_flag("--include-unseen", o.opts.include_unseen_index,
                  "add held-out CAD views to the retrieval index (no retraining)");
    sub->add_option("--sample-points", o.opts.sample_points,
                    "surface samples per mesh comparison")->capture_default_str();
    sub->add_option("--mesh-f1-threshold", o.opts.mesh_f1_threshold,
                    "F1 distance cut scoring mesh AP matches")->capture_default_str();
    sub->add_option("--seed", o.opts.seed, "surface sampling seed")->capture_default_str();
    sub->add_option("--jobs", o.opts.jobs,
                    "worker threads across images (output independent of the value)")->capture_default_str();
    sub->fallthrough();
    sub->callback([&o, &common] {
        check_config_version(common);
        require_dir(o.data, "dataset");
        require_file(o.checkpoint, "checkpoint");
        require_file(o.bins, "bins");
        o.opts.ablation = ablation_from_name(o.ablation);
        prepare_out(o.out);
        Dataset ds = load_dataset(o.data);
        const std::vector<Sample>& samples = split_by_name(ds, o.split);
        if (samples.empty()) throw ConfigError("split '" + o.split + "' has no samples");
        EncoderParams params = load_checkpoint(o.checkpoint);
        RotationBins bins = load_bins(o.bins);
        EvalReport report = evaluate(params, bins, ds, samples, o.opts);
        write_text(o.out + "/metrics.json", eval_report_json(report, ds, o.opts, o.split));
        std::cout << std::setprecision(4) << "split=" << o.split << " ablation=" << o.ablation
                  << " ap_mesh=" << report.mesh_ap.ap.mean
                  << " ap50_mesh=" << report.mesh_ap.ap50.mean
                  << " chamfer=" << report.mean_chamfer
                  << " top1=" << report.retrieval_top1
                  << " rot_med_deg=" << report.median_rotation_deg << " -> " << o.out
                  << "/metrics.json\n";
    });
}

// ---- retrieve -----------------------------------------------------------

struct RetrieveOpts {
    std::string data, checkpoint, bins, sample, out;
    bool include_unseen = false;
    bool emit_obj = false;
};

void setup_retrieve(CLI::App& app, RetrieveOpts& o, const CommonOpts& common) {
    CLI::App* sub = app.add_subcommand(
        "retrieve", "Per-region CAD retrieval and pose for one sample");
    sub->add_option("--data", o.data, "dataset directory")->required();
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint.bin from train")->required();
    sub->add_option("--bins", o.bins, "bins.json from train")->required();
    sub->add_option("--sample", o.sample, "sample name, e.g. val_0003")->required();
    sub->add_flag("--include-unseen", o.include_unseen,
                  "add held-out CAD views to the retrieval index");
    sub->add_flag("--emit-obj", o.emit_obj,
                  "write one posed OBJ per region under --out");
    sub->add_option("--out", o.out, "output directory for --emit-obj meshes");
    sub->fallthrough();
    sub->callback([&o, &common] {
        check_config_version(common);
        require_dir(o.data, "dataset");
        require_file(o.checkpoint, "checkpoint");
        require_file(o.bins, "bins");
        if (o.emit_obj && o.out.empty()) throw ConfigError("--emit-obj requires --out");
        Dataset ds = load_dataset(o.data);
        const Sample* sample = find_sample(ds, o.sample);
        if (sample == nullptr)
            throw std::runtime_error("retrieve: unknown sample '" + o.sample + "'");
        EncoderParams params = load_checkpoint(o.checkpoint);
        RotationBins bins = load_bins(o.bins);
        EmbeddingIndex index = build_view_index(params, ds, o.include_unseen);
        auto preds = predict_sample(params, bins, index, *sample, ds.intrinsics);
        if (o.emit_obj) prepare_out(o.out);
        std::cout << std::setprecision(10);
        for (std::size_t r = 0; r < preds.size(); ++r) {
            const RegionPrediction& p = preds[r];
            const Quaternion& q = p.pose.rotation;
            const Vec3& t = p.pose.translation;
            std::cout << "class=" << class_label(ds, p.class_id)
                      << " object_id=" << p.object_id << " rotation=" << q.w << "," << q.x
                      << "," << q.y << "," << q.z << " translation=" << t[0] << "," << t[1]
                      << "," << t[2] << " similarity=" << p.similarity << "\n";
            if (o.emit_obj) {
                const TriMesh& mesh =
                    ds.entries.at(static_cast<std::size_t>(p.object_id)).mesh;
                save_obj(o.out + "/" + o.sample + "_region" + std::to_string(r) + ".obj",
                         apply_pose(p.pose, mesh));
            }
        }
        if (o.emit_obj)
            std::cerr << "wrote " << preds.size() << " posed meshes under " << o.out << "\n";
    });
}

// ---- export-embeddings --------------------------------------------------

struct ExportOpts {
    std::string data, checkpoint, out;
    std::string split = "val";
    bool include_unseen = false;
};

void setup_export(CLI::App& app, ExportOpts& o, const CommonOpts& common) {
    CLI::App* sub = app.add_subcommand(
        "export-embeddings", "Dump region and CAD-view embeddings for external analysis");
    sub->add_option("--data", o.data, "dataset directory")->required();
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint.bin from train")->required();
    sub->add_option("--out", o.out, "output directory for embeddings.bin")->required();
    sub->add_option("--split", o.split, "train|val|unseen")->capture_default_str();
    sub->add_flag("--include-unseen", o.include_unseen,
                  "also export held-out objects' view embeddings");
    sub->fallthrough();
    sub->callback([&o, &common] {
        check_config_version(common);
        require_dir(o.data, "dataset");
        require_file(o.checkpoint, "checkpoint");
        prepare_out(o.out);
        Dataset ds = load_dataset(o.data);
        const std::vector<Sample>& samples = split_by_name(ds, o.split);
        EncoderParams params = load_checkpoint(o.checkpoint);
        std::vector<EmbeddingVector> all;
        std::size_t regions = 0;
        if (!samples.empty()) {  // an empty split exports an empty file
            all = region_embeddings(params, samples);
            regions = all.size();
            for (EmbeddingVector& v : view_embeddings(params, ds, o.include_unseen))
                all.push_back(std::move(v));
        }
        save_embeddings(o.out + "/embeddings.bin", all);
        std::cout << "exported " << regions << " regions + " << (all.size() - regions)
                  << " views -> " << o.out << "/embeddings.bin\n";
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "cadre: CAD retrieval-and-pose pipeline on procedural desk scenes.\n"
        "Exit codes: 0 success, 1 runtime failure, 2 configuration error."};
    app.require_subcommand(1);

    CommonOpts common;
    add_config(app, common);
    GenDataOpts gen;
    TrainOpts tr;
    EvalCmdOpts ev;
    RetrieveOpts rt;
    ExportOpts ex;
    setup_gen_data(app, gen, common);
    setup_train(app, tr, common);
    setup_eval(app, ev, common);
    setup_retrieve(app, rt, common);
    setup_export(app, ex, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
