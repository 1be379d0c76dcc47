#include "cadre/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cadre/kmedoids.hpp"
#include "cadre/render.hpp"

namespace cadre {

namespace {

constexpr double kPi = 3.14159265358979323846;

void append_tri(TriMesh& m, const Vec3& a, const Vec3& b, const Vec3& c) {
    int base = static_cast<int>(m.vertices.size());
    m.vertices.push_back(a);
    m.vertices.push_back(b);
    m.vertices.push_back(c);
    m.faces.push_back({base, base + 1, base + 2});
}

void append_quad(TriMesh& m, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    append_tri(m, a, b, c);
    append_tri(m, a, c, d);
}

void append_box(TriMesh& m, const Vec3& lo, const Vec3& hi) {
    const Vec3 v000{lo[0], lo[1], lo[2]}, v100{hi[0], lo[1], lo[2]};
    const Vec3 v010{lo[0], hi[1], lo[2]}, v110{hi[0], hi[1], lo[2]};
    const Vec3 v001{lo[0], lo[1], hi[2]}, v101{hi[0], lo[1], hi[2]};
    const Vec3 v011{lo[0], hi[1], hi[2]}, v111{hi[0], hi[1], hi[2]};
    append_quad(m, v000, v100, v110, v010);  // z = lo
    append_quad(m, v001, v011, v111, v101);  // z = hi
    append_quad(m, v000, v001, v101, v100);  // y = lo
    append_quad(m, v010, v110, v111, v011);  // y = hi
    append_quad(m, v000, v010, v011, v001);  // x = lo
    append_quad(m, v100, v101, v111, v110);  // x = hi
}

TriMesh base_shape(int family, Rng& rng) {
    TriMesh m;
    switch (family) {
        case 0: {  // box
            const double hx = rng.uniform(0.55, 0.80);
            const double hy = rng.uniform(0.35, 0.60);
            const double hz = rng.uniform(0.45, 0.70);
            append_box(m, {-hx, -hy, -hz}, {hx, hy, hz});
            break;
        }
        case 1: {  // faceted cylinder, axis along y
            const double r = rng.uniform(0.50, 0.70);
            const double hh = rng.uniform(0.55, 0.85);
            const int sides = 12;
            for (int i = 0; i < sides; ++i) {
                const double a0 = 2.0 * kPi * i / sides;
                const double a1 = 2.0 * kPi * (i + 1) / sides;
                const Vec3 b0{r * std::cos(a0), -hh, r * std::sin(a0)};
                const Vec3 b1{r * std::cos(a1), -hh, r * std::sin(a1)};
                const Vec3 t0{b0[0], hh, b0[2]};
                const Vec3 t1{b1[0], hh, b1[2]};
                append_quad(m, b0, b1, t1, t0);
                append_tri(m, Vec3{0.0, -hh, 0.0}, b1, b0);
                append_tri(m, Vec3{0.0, hh, 0.0}, t0, t1);
            }
            break;
        }
        case 2: {  // wedge: full-height back face ramping down to the front
            const double hx = rng.uniform(0.60, 0.85);
            const double hy = rng.uniform(0.40, 0.60);
            const double hz = rng.uniform(0.50, 0.70);
            const Vec3 b0{-hx, -hy, -hz}, b1{hx, -hy, -hz};
            const Vec3 b2{hx, -hy, hz}, b3{-hx, -hy, hz};
            const Vec3 t0{-hx, hy, -hz}, t3{-hx, hy, hz};
            append_quad(m, b0, b1, b2, b3);  // bottom
            append_quad(m, b0, b3, t3, t0);  // back (x = -hx)
            append_quad(m, t0, t3, b2, b1);  // ramp
            append_tri(m, b0, t0, b1);       // side z = -hz
            append_tri(m, b3, b2, t3);       // side z = +hz
            break;
        }
        case 3: {  // tapered box (frustum with rectangular cross-section)
            const double hx = rng.uniform(0.60, 0.85);
            const double hz = rng.uniform(0.50, 0.75);
            const double hy = rng.uniform(0.50, 0.75);
            const double t = rng.uniform(0.45, 0.70);
            const Vec3 b0{-hx, -hy, -hz}, b1{hx, -hy, -hz};
            const Vec3 b2{hx, -hy, hz}, b3{-hx, -hy, hz};
            const Vec3 t0{-hx * t, hy, -hz * t}, t1{hx * t, hy, -hz * t};
            const Vec3 t2{hx * t, hy, hz * t}, t3{-hx * t, hy, hz * t};
            append_quad(m, b0, b1, b2, b3);
            append_quad(m, t0, t3, t2, t1);
            append_quad(m, b0, t0, t1, b1);
            append_quad(m, b1, t1, t2, b2);
            append_quad(m, b2, t2, t3, b3);
            append_quad(m, b3, t3, t0, b0);
            break;
        }
        case 4: {  // L-bracket: vertical slab plus horizontal slab
            const double hx = rng.uniform(0.55, 0.80);
            const double hy = rng.uniform(0.55, 0.80);
            const double hz = rng.uniform(0.40, 0.60);
            const double t = rng.uniform(0.55, 0.80);
            append_box(m, {-hx, -hy, -hz}, {-hx + t, hy, hz});
            append_box(m, {-hx, -hy, -hz}, {hx, -hy + t, hz});
            break;
        }
        case 5: {  // T-beam: stem with a crossbar on top
            const double hx = rng.uniform(0.60, 0.85);
            const double hy = rng.uniform(0.55, 0.80);
            const double hz = rng.uniform(0.40, 0.60);
            const double stem = rng.uniform(0.45, 0.65);
            const double bar = rng.uniform(0.55, 0.75);
            append_box(m, {-hx * stem * 0.5, -hy, -hz}, {hx * stem * 0.5, hy, hz});
            append_box(m, {-hx, hy - bar, -hz}, {hx, hy, hz});
            break;
        }
        default:
            throw std::invalid_argument("make_shape: unknown family");
    }
    return m;
}

} // namespace

int shape_family_count() { return 6; }

std::string shape_family_name(int family) {
    static const char* names[] = {"box", "cylinder", "wedge", "taper", "bracket", "tee"};
    if (family < 0 || family >= shape_family_count())
        throw std::invalid_argument("shape_family_name: unknown family");
    return names[family];
}

TriMesh make_shape(int family, Rng& rng) {
    TriMesh m = base_shape(family, rng);

    // Off-axis foot under the flat base: no rotation maps the shape onto
    // itself, so the renderer sees a unique silhouette per rotation.
    Aabb bb = bounding_box(m);
    const Vec3 ext = bb.extent();
    const double k = 0.16 * std::max({ext[0], ext[1], ext[2]});
    const double fx = bb.lo[0] + 0.70 * ext[0];
    const double fz = bb.lo[2] + 0.32 * ext[2];
    append_box(m, {fx - k, bb.lo[1] - 1.4 * k, fz - k}, {fx + k, bb.lo[1] + 0.6 * k, fz + k});

    // Recenter on the bounding-box center and scale to a randomized radius so
    // classes are not separable by size alone.
    bb = bounding_box(m);
    const Vec3 c{0.5 * (bb.lo[0] + bb.hi[0]), 0.5 * (bb.lo[1] + bb.hi[1]),
                 0.5 * (bb.lo[2] + bb.hi[2])};
    for (Vec3& v : m.vertices) v = v - c;
    const double target = rng.uniform(1.05, 1.35);
    const double radius = bounding_radius(m);
    const double s = target / radius;
    for (Vec3& v : m.vertices) v = s * v;
    return m;
}

namespace {

struct PlacedObject {
    int object_id;
    Pose pose;
};

// Poses 1..max_objects distinct catalog objects on a jittered 3x3 grid whose
// spread scales with each object's depth, keeping every projected center
// well inside the frame.
std::vector<PlacedObject> place_objects(const std::vector<int>& pool, int max_objects,
                                        Rng& rng) {
    const int limit = std::min<int>(max_objects, static_cast<int>(pool.size()));
    const int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(limit)));

    std::vector<int> objects = pool;
    for (int i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_index(objects.size() - i);
        std::swap(objects[static_cast<std::size_t>(i)], objects[j]);
    }
    std::vector<int> cells(9);
    for (int i = 0; i < 9; ++i) cells[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_index(cells.size() - i);
        std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
    }

    std::vector<PlacedObject> placed;
    for (int i = 0; i < n; ++i) {
        PlacedObject po;
        po.object_id = objects[static_cast<std::size_t>(i)];
        const double z = rng.uniform(4.5, 7.5);
        const double spread = 0.75 * z - 1.7;  // safe half-range at this depth
        const int cell = cells[static_cast<std::size_t>(i)];
        const double fx = (cell % 3 - 1) * 0.62 + rng.uniform(-0.20, 0.20);
        const double fy = (cell / 3 - 1) * 0.62 + rng.uniform(-0.20, 0.20);
        const double tilt = rng.uniform(-0.35, 0.35);
        const double yaw = rng.uniform(-kPi, kPi);
        po.pose.rotation = quat_multiply(Quaternion::from_axis_angle({1, 0, 0}, tilt),
                                         Quaternion::from_axis_angle({0, 1, 0}, yaw));
        po.pose.translation = {fx * spread, fy * spread, z};
        po.pose.scale = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
        placed.push_back(po);
    }
    return placed;
}

Sample make_scene(const std::string& name, const std::vector<CadEntry>& entries,
                  const std::vector<int>& pool, const DatasetSpec& spec,
                  const CameraIntrinsics& intr, Rng rng) {
    const int w = spec.scene_size, h = spec.scene_size;
    std::vector<PlacedObject> placed = place_objects(pool, spec.max_objects_per_scene, rng);

    std::vector<SceneObject> scene_objects;
    scene_objects.reserve(placed.size());
    for (const PlacedObject& po : placed)
        scene_objects.push_back({&entries[static_cast<std::size_t>(po.object_id)].mesh, po.pose});

    Sample sample;
    sample.name = name;
    sample.image = render_scene(scene_objects, intr, w, h).image;
    quantize_to_byte_grid(sample.image);

    for (const PlacedObject& po : placed) {
        const TriMesh& mesh = entries[static_cast<std::size_t>(po.object_id)].mesh;
        GroundTruth gt;
        gt.object_id = po.object_id;
        gt.pose = po.pose;
        gt.center_u = intr.fx * po.pose.translation[0] / po.pose.translation[2] + intr.cx;
        gt.center_v = intr.fy * po.pose.translation[1] / po.pose.translation[2] + intr.cy;
        // Mirrors the out-of-frame filtering done on real scans; placement
        // keeps centers inside, so this is purely defensive.
        if (gt.center_u < 0.0 || gt.center_u >= w || gt.center_v < 0.0 || gt.center_v >= h)
            continue;
        gt.scene_mask = render_mask(mesh, po.pose, intr, w, h);
        Box box;
        try {
            box = mask_bounds(gt.scene_mask);
        } catch (const std::domain_error&) {
            continue;  // nothing of the object falls inside the frame
        }
        const int class_id = entries[static_cast<std::size_t>(po.object_id)].class_id;
        sample.regions.push_back(
            build_region(sample.image, gt.scene_mask, box, class_id, spec.roi_resolution));
        sample.truths.push_back(std::move(gt));
    }
    return sample;
}

} // namespace

DetectionRegion build_region(const Image& scene, const Image& scene_mask, const Box& box,
                             int class_id, int roi_resolution) {
    DetectionRegion region;
    region.box = box;
    region.class_id = class_id;
    region.features = crop_bilinear(scene, box, roi_resolution, roi_resolution);
    region.mask = crop_nearest(scene_mask, box, roi_resolution, roi_resolution);
    return region;
}

std::map<int, std::vector<Quaternion>> select_canonical_views(
    const std::map<int, std::vector<Quaternion>>& rotations_per_class, int k,
    std::uint64_t seed) {
    if (k < 1) throw std::domain_error("select_canonical_views: k must be positive");
    std::map<int, std::vector<Quaternion>> out;
    for (const auto& [class_id, rotations] : rotations_per_class) {
        if (static_cast<int>(rotations.size()) < k)
            throw std::domain_error("select_canonical_views: fewer than k views for a class");
        auto dist = [&rotations](int a, int b) {
            return quat_geodesic(rotations[static_cast<std::size_t>(a)],
                                 rotations[static_cast<std::size_t>(b)]);
        };
        KMedoidsResult res =
            kmedoids(static_cast<int>(rotations.size()), k, dist, seed ^ static_cast<std::uint64_t>(class_id));
        std::vector<Quaternion> views;
        views.reserve(static_cast<std::size_t>(k));
        for (int idx : res.medoids) views.push_back(rotations[static_cast<std::size_t>(idx)]);
        out[class_id] = std::move(views);
    }
    return out;
}

JitteredView jittered_gt_view(const TriMesh& mesh, const Quaternion& gt_rotation,
                              double magnitude, std::uint64_t seed, int resolution) {
    if (!(magnitude > 0.0)) throw std::domain_error("jittered_gt_view: magnitude must be positive");
    Rng rng(seed);
    Vec3 axis{0.0, 0.0, 1.0};
    for (;;) {
        axis = {rng.normal(), rng.normal(), rng.normal()};
        const double n = norm(axis);
        if (n > 1e-9) {
            axis = (1.0 / n) * axis;
            break;
        }
    }
    const double angle = magnitude * rng.uniform();
    JitteredView jv;
    jv.rotation = quat_normalize(
        quat_multiply(Quaternion::from_axis_angle(axis, angle), gt_rotation));
    jv.image = render_view(mesh, jv.rotation, resolution);
    quantize_to_byte_grid(jv.image);
    return jv;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.num_classes < 2) throw std::domain_error("generate_dataset: need at least 2 classes");
    if (spec.num_classes > shape_family_count())
        throw std::domain_error("generate_dataset: more classes than shape families");
    if (spec.objects_per_class < 4)
        throw std::domain_error("generate_dataset: need at least 4 objects per class");
    if (spec.unseen_per_class < 0 ||
        spec.objects_per_class - spec.unseen_per_class < 2)
        throw std::domain_error("generate_dataset: unseen split leaves too few train objects");
    if (spec.train_scenes < 1 || spec.val_scenes < 0 || spec.unseen_scenes < 0)
        throw std::domain_error("generate_dataset: bad scene counts");
    if (spec.max_objects_per_scene < 1 || spec.max_objects_per_scene > 9)
        throw std::domain_error("generate_dataset: objects per scene must be in [1, 9]");
    if (spec.unseen_scenes > 0 && spec.unseen_per_class == 0)
        throw std::domain_error("generate_dataset: unseen scenes need held-out objects");

    Dataset ds;
    ds.spec = spec;
    ds.intrinsics = {spec.focal, spec.focal, 0.5 * spec.scene_size, 0.5 * spec.scene_size};
    for (int c = 0; c < spec.num_classes; ++c) ds.class_names.push_back(shape_family_name(c));

    Rng master(spec.seed);
    Rng shape_rng = master.fork(1);
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int j = 0; j < spec.objects_per_class; ++j) {
            CadEntry entry;
            entry.object_id = static_cast<int>(ds.entries.size());
            entry.class_id = c;
            entry.mesh = make_shape(c, shape_rng);
            const bool unseen = j >= spec.objects_per_class - spec.unseen_per_class;
            (unseen ? ds.unseen_objects : ds.train_objects).push_back(entry.object_id);
            ds.entries.push_back(std::move(entry));
        }
    }

    Rng train_rng = master.fork(2);
    Rng val_rng = master.fork(3);
    Rng unseen_rng = master.fork(4);
    auto scene_name = [](const char* split, int i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s_%04d", split, i);
        return std::string(buf);
    };
    for (int i = 0; i < spec.train_scenes; ++i)
        ds.train.push_back(make_scene(scene_name("train", i), ds.entries, ds.train_objects,
                                      spec, ds.intrinsics, train_rng.fork(static_cast<std::uint64_t>(i))));
    for (int i = 0; i < spec.val_scenes; ++i)
        ds.val.push_back(make_scene(scene_name("val", i), ds.entries, ds.train_objects, spec,
                                    ds.intrinsics, val_rng.fork(static_cast<std::uint64_t>(i))));
    for (int i = 0; i < spec.unseen_scenes; ++i)
        ds.unseen.push_back(make_scene(scene_name("unseen", i), ds.entries, ds.unseen_objects,
                                       spec, ds.intrinsics,
                                       unseen_rng.fork(static_cast<std::uint64_t>(i))));

    // Canonical views come from the rotations observed in training scenes.
    std::map<int, std::vector<Quaternion>> train_rotations;
    for (const Sample& s : ds.train)
        for (std::size_t r = 0; r < s.regions.size(); ++r)
            train_rotations[s.regions[r].class_id].push_back(s.truths[r].pose.rotation);
    for (int c = 0; c < spec.num_classes; ++c)
        if (static_cast<int>(train_rotations[c].size()) < spec.view_count)
            throw std::domain_error(
                "generate_dataset: class has fewer training views than view_count");
    ds.canonical_views =
        select_canonical_views(train_rotations, spec.view_count, master.fork(5).next_u64());

    for (CadEntry& entry : ds.entries) {
        entry.view_rotations = ds.canonical_views.at(entry.class_id);
        entry.view_renders.reserve(entry.view_rotations.size());
        for (const Quaternion& q : entry.view_rotations) {
            Image view = render_view(entry.mesh, q, spec.view_resolution);
            quantize_to_byte_grid(view);
            entry.view_renders.push_back(std::move(view));
        }
    }
    return ds;
}

namespace {

nlohmann::json quat_to_json(const Quaternion& q) {
    return nlohmann::json::array({q.w, q.x, q.y, q.z});
}

Quaternion quat_from_json(const nlohmann::json& j) {
    return Quaternion{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
                      j.at(3).get<double>()};
}

std::string object_dir_name(int object_id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "obj_%03d", object_id);
    return buf;
}

std::string view_file_name(int view) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "view_%02d.pgm", view);
    return buf;
}

void write_annotation_records(std::ostream& os, const std::vector<Sample>& samples,
                              const char* split, double focal) {
    for (const Sample& s : samples) {
        for (std::size_t r = 0; r < s.regions.size(); ++r) {
            const DetectionRegion& region = s.regions[r];
            const GroundTruth& gt = s.truths[r];
            nlohmann::json rec;
            rec["image"] = "images/" + s.name + ".pgm";
            rec["split"] = split;
            rec["class"] = region.class_id;
            rec["box"] = {region.box.x0, region.box.y0, region.box.x1, region.box.y1};
            rec["mask"] = "masks/" + s.name + "_r" + std::to_string(r) + ".pgm";
            rec["model_id"] = gt.object_id;
            rec["rotation"] = quat_to_json(gt.pose.rotation);
            rec["translation"] = {gt.pose.translation[0], gt.pose.translation[1],
                                  gt.pose.translation[2]};
            rec["scale"] = {gt.pose.scale[0], gt.pose.scale[1], gt.pose.scale[2]};
            rec["center"] = {gt.center_u, gt.center_v};
            rec["focal"] = focal;
            os << rec.dump() << "\n";
        }
    }
}

} // namespace

void save_dataset(const std::string& root, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    fs::create_directories(root + "/meshes");
    fs::create_directories(root + "/images");
    fs::create_directories(root + "/masks");

    for (const CadEntry& entry : ds.entries) {
        save_obj(root + "/meshes/" + object_dir_name(entry.object_id) + ".obj", entry.mesh);
        const std::string rdir = root + "/renders/" + object_dir_name(entry.object_id);
        fs::create_directories(rdir);
        for (std::size_t v = 0; v < entry.view_renders.size(); ++v)
            save_pgm(rdir + "/" + view_file_name(static_cast<int>(v)), entry.view_renders[v]);
    }

    auto save_split = [&](const std::vector<Sample>& samples) {
        for (const Sample& s : samples) {
            save_pgm(root + "/images/" + s.name + ".pgm", s.image);
            for (std::size_t r = 0; r < s.truths.size(); ++r)
                save_pgm(root + "/masks/" + s.name + "_r" + std::to_string(r) + ".pgm",
                         s.truths[r].scene_mask);
        }
    };
    save_split(ds.train);
    save_split(ds.val);
    save_split(ds.unseen);

    std::ofstream ann(root + "/annotations.jsonl", std::ios::binary);
    if (!ann) throw std::runtime_error("save_dataset: cannot write annotations.jsonl");
    write_annotation_records(ann, ds.train, "train", ds.intrinsics.fx);
    write_annotation_records(ann, ds.val, "val", ds.intrinsics.fx);
    write_annotation_records(ann, ds.unseen, "unseen", ds.intrinsics.fx);
    ann.close();

    nlohmann::json meta;
    meta["format"] = "cadre-dataset-v1";
    meta["spec"] = {{"num_classes", ds.spec.num_classes},
                    {"objects_per_class", ds.spec.objects_per_class},
                    {"unseen_per_class", ds.spec.unseen_per_class},
                    {"train_scenes", ds.spec.train_scenes},
                    {"val_scenes", ds.spec.val_scenes},
                    {"unseen_scenes", ds.spec.unseen_scenes},
                    {"max_objects_per_scene", ds.spec.max_objects_per_scene},
                    {"scene_size", ds.spec.scene_size},
                    {"focal", ds.spec.focal},
                    {"view_count", ds.spec.view_count},
                    {"view_resolution", ds.spec.view_resolution},
                    {"roi_resolution", ds.spec.roi_resolution},
                    {"seed", ds.spec.seed}};
    meta["intrinsics"] = {{"fx", ds.intrinsics.fx},
                          {"fy", ds.intrinsics.fy},
                          {"cx", ds.intrinsics.cx},
                          {"cy", ds.intrinsics.cy}};
    meta["class_names"] = ds.class_names;
    nlohmann::json objects = nlohmann::json::array();
    for (const CadEntry& entry : ds.entries)
        objects.push_back({{"object_id", entry.object_id},
                           {"class_id", entry.class_id},
                           {"mesh", "meshes/" + object_dir_name(entry.object_id) + ".obj"}});
    meta["objects"] = objects;
    meta["train_objects"] = ds.train_objects;
    meta["unseen_objects"] = ds.unseen_objects;
    nlohmann::json views;
    for (const auto& [class_id, rotations] : ds.canonical_views) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Quaternion& q : rotations) arr.push_back(quat_to_json(q));
        views[std::to_string(class_id)] = arr;
    }
    meta["canonical_views"] = views;

    std::ofstream mf(root + "/dataset.json", std::ios::binary);
    if (!mf) throw std::runtime_error("save_dataset: cannot write dataset.json");
    mf << meta.dump(2) << "\n";
}

namespace {

[[noreturn]] void ann_error(int line, const std::string& field, const std::string& what) {
    throw std::runtime_error("annotations line " + std::to_string(line) + ": field '" + field +
                             "': " + what);
}

const nlohmann::json& ann_field(const nlohmann::json& rec, const char* key, int line) {
    auto it = rec.find(key);
    if (it == rec.end()) ann_error(line, key, "missing");
    return *it;
}

double ann_number(const nlohmann::json& rec, const char* key, int line) {
    const nlohmann::json& v = ann_field(rec, key, line);
    if (!v.is_number()) ann_error(line, key, "not a number");
    return v.get<double>();
}

std::vector<double> ann_array(const nlohmann::json& rec, const char* key, std::size_t n,
                              int line) {
    const nlohmann::json& v = ann_field(rec, key, line);
    if (!v.is_array() || v.size() != n)
        ann_error(line, key, "expected array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) ann_error(line, key, "expected array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

} // namespace

AnnotationSet load_annotations(const std::string& path, const CameraIntrinsics& intr,
                               int roi_resolution) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_annotations: cannot open " + path);
    const std::string dir = std::filesystem::path(path).parent_path().string();
    auto resolve = [&dir](const std::string& rel) {
        return dir.empty() ? rel : dir + "/" + rel;
    };

    AnnotationSet out;
    // cache of loaded scene images, keyed by relative path
    std::map<std::string, std::size_t> sample_index;
    std::map<std::string, std::vector<Sample>*> split_of_image;

    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("annotations line " + std::to_string(line) +
                                     ": bad JSON: " + e.what());
        }

        const nlohmann::json& image_field = ann_field(rec, "image", line);
        if (!image_field.is_string()) ann_error(line, "image", "not a string");
        const std::string image_rel = image_field.get<std::string>();

        const nlohmann::json& split_field = ann_field(rec, "split", line);
        if (!split_field.is_string()) ann_error(line, "split", "not a string");
        const std::string split = split_field.get<std::string>();
        std::vector<Sample>* bucket = split == "train"  ? &out.train
                                      : split == "val"  ? &out.val
                                      : split == "unseen" ? &out.unseen
                                                          : nullptr;
        if (!bucket) ann_error(line, "split", "must be train, val, or unseen");

        const nlohmann::json& class_field = ann_field(rec, "class", line);
        if (!class_field.is_number_integer() || class_field.get<int>() < 0)
            ann_error(line, "class", "must be a non-negative integer");
        const int class_id = class_field.get<int>();

        const std::vector<double> box_v = ann_array(rec, "box", 4, line);
        Box box{box_v[0], box_v[1], box_v[2], box_v[3]};
        if (!(box.width() > 0.0) || !(box.height() > 0.0)) ann_error(line, "box", "inverted");

        const nlohmann::json& mask_field = ann_field(rec, "mask", line);
        if (!mask_field.is_string()) ann_error(line, "mask", "not a string");

        const nlohmann::json& model_field = ann_field(rec, "model_id", line);
        if (!model_field.is_number_integer() || model_field.get<int>() < 0)
            ann_error(line, "model_id", "must be a non-negative integer");

        const std::vector<double> rot = ann_array(rec, "rotation", 4, line);
        Quaternion q{rot[0], rot[1], rot[2], rot[3]};
        if (std::abs(q.norm() - 1.0) > 1e-6) ann_error(line, "rotation", "not a unit quaternion");

        const std::vector<double> tr = ann_array(rec, "translation", 3, line);
        const std::vector<double> sc = ann_array(rec, "scale", 3, line);
        if (!(sc[0] > 0.0 && sc[1] > 0.0 && sc[2] > 0.0))
            ann_error(line, "scale", "must be positive");
        const std::vector<double> ctr = ann_array(rec, "center", 2, line);
        if (ann_number(rec, "focal", line) <= 0.0) ann_error(line, "focal", "must be positive");

        auto it = sample_index.find(image_rel);
        if (it == sample_index.end()) {
            Sample s;
            s.image = load_pgm(resolve(image_rel));
            const std::string stem = std::filesystem::path(image_rel).stem().string();
            s.name = stem;
            bucket->push_back(std::move(s));
            it = sample_index.emplace(image_rel, bucket->size() - 1).first;
            split_of_image[image_rel] = bucket;
        } else if (split_of_image[image_rel] != bucket) {
            ann_error(line, "split", "image assigned to two splits");
        }
        Sample& sample = (*bucket)[it->second];
        if (ctr[0] < 0.0 || ctr[0] >= sample.image.width || ctr[1] < 0.0 ||
            ctr[1] >= sample.image.height)
            ann_error(line, "center", "outside the image");

        GroundTruth gt;
        gt.object_id = model_field.get<int>();
        gt.pose.rotation = q;
        gt.pose.translation = {tr[0], tr[1], tr[2]};
        gt.pose.scale = {sc[0], sc[1], sc[2]};
        gt.center_u = ctr[0];
        gt.center_v = ctr[1];
        gt.scene_mask = load_pgm(resolve(mask_field.get<std::string>()));
        if (!gt.scene_mask.same_size(sample.image))
            ann_error(line, "mask", "size differs from the image");

        sample.regions.push_back(
            build_region(sample.image, gt.scene_mask, box, class_id, roi_resolution));
        sample.truths.push_back(std::move(gt));
    }
    return out;
}

Dataset load_dataset(const std::string& root) {
    std::ifstream mf(root + "/dataset.json", std::ios::binary);
    if (!mf) throw std::runtime_error("load_dataset: cannot open " + root + "/dataset.json");
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("load_dataset: bad dataset.json: ") + e.what());
    }
    if (meta.value("format", "") != "cadre-dataset-v1")
        throw std::runtime_error("load_dataset: unknown dataset format");

    Dataset ds;
    const auto& js = meta.at("spec");
    ds.spec.num_classes = js.at("num_classes").get<int>();
    ds.spec.objects_per_class = js.at("objects_per_class").get<int>();
    ds.spec.unseen_per_class = js.at("unseen_per_class").get<int>();
    ds.spec.train_scenes = js.at("train_scenes").get<int>();
    ds.spec.val_scenes = js.at("val_scenes").get<int>();
    ds.spec.unseen_scenes = js.at("unseen_scenes").get<int>();
    ds.spec.max_objects_per_scene = js.at("max_objects_per_scene").get<int>();
    ds.spec.scene_size = js.at("scene_size").get<int>();
    ds.spec.focal = js.at("focal").get<double>();
    ds.spec.view_count = js.at("view_count").get<int>();
    ds.spec.view_resolution = js.at("view_resolution").get<int>();
    ds.spec.roi_resolution = js.at("roi_resolution").get<int>();
    ds.spec.seed = js.at("seed").get<std::uint64_t>();
    const auto& ji = meta.at("intrinsics");
    ds.intrinsics = {ji.at("fx").get<double>(), ji.at("fy").get<double>(),
                     ji.at("cx").get<double>(), ji.at("cy").get<double>()};
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    ds.train_objects = meta.at("train_objects").get<std::vector<int>>();
    ds.unseen_objects = meta.at("unseen_objects").get<std::vector<int>>();
    for (const auto& [key, arr] : meta.at("canonical_views").items()) {
        std::vector<Quaternion> rotations;
        for (const auto& jq : arr) rotations.push_back(quat_from_json(jq));
        ds.canonical_views[std::stoi(key)] = std::move(rotations);
    }

    for (const auto& jo : meta.at("objects")) {
        CadEntry entry;
        entry.object_id = jo.at("object_id").get<int>();
        entry.class_id = jo.at("class_id").get<int>();
        entry.mesh = load_obj(root + "/" + jo.at("mesh").get<std::string>());
        entry.view_rotations = ds.canonical_views.at(entry.class_id);
        for (int v = 0; v < ds.spec.view_count; ++v)
            entry.view_renders.push_back(load_pgm(root + "/renders/" +
                                                  object_dir_name(entry.object_id) + "/" +
                                                  view_file_name(v)));
        ds.entries.push_back(std::move(entry));
    }

    AnnotationSet ann =
        load_annotations(root + "/annotations.jsonl", ds.intrinsics, ds.spec.roi_resolution);
    ds.train = std::move(ann.train);
    ds.val = std::move(ann.val);
    ds.unseen = std::move(ann.unseen);
    return ds;
}

} // namespace cadre
