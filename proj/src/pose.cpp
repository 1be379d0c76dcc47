#include "cadre/pose.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cadre/kmedoids.hpp"

namespace cadre {

RotationBins::RotationBins(std::map<int, std::vector<Quaternion>> bins)
    : bins_(std::move(bins)) {
    for (const auto& [cls, qs] : bins_) {
        if (qs.empty()) throw std::invalid_argument("RotationBins: empty class " + std::to_string(cls));
        for (const auto& q : qs)
            if (!quat_is_unit(q))
                throw std::invalid_argument("RotationBins: non-unit medoid in class " +
                                            std::to_string(cls));
    }
}

const std::vector<Quaternion>& RotationBins::bins_for(int class_id) const {
    auto it = bins_.find(class_id);
    if (it == bins_.end())
        throw std::out_of_range("RotationBins: unknown class " + std::to_string(class_id));
    return it->second;
}

RotationBins build_bins(const std::map<int, std::vector<Quaternion>>& train_rotations,
                        int k, std::uint64_t seed) {
    if (k < 1) throw std::domain_error("build_bins: k must be >= 1");
    std::map<int, std::vector<Quaternion>> out;
    for (const auto& [cls, rotations] : train_rotations) {
        if (static_cast<int>(rotations.size()) < k)
            throw std::domain_error("build_bins: class " + std::to_string(cls) + " has " +
                                    std::to_string(rotations.size()) + " rotations, needs >= " +
                                    std::to_string(k));
        auto dist = [&rotations](int a, int b) {
            return quat_geodesic(rotations[a], rotations[b]);
        };
        KMedoidsResult res = kmedoids(static_cast<int>(rotations.size()), k, dist, seed);
        std::vector<Quaternion> medoids;
        medoids.reserve(res.medoids.size());
        for (int idx : res.medoids) medoids.push_back(rotations[idx]);
        out.emplace(cls, std::move(medoids));
    }
    return RotationBins(std::move(out));
}

PoseTarget encode_rotation(const Quaternion& truth, const RotationBins& bins,
                           int class_id, double theta_gate) {
    const auto& medoids = bins.bins_for(class_id);
    PoseTarget target;
    double best = quat_geodesic(medoids[0], truth);
    target.bin_index = 0;
    for (std::size_t i = 1; i < medoids.size(); ++i) {
        double d = quat_geodesic(medoids[i], truth);
        if (d < best) {
            best = d;
            target.bin_index = static_cast<int>(i);
        }
    }
    Quaternion delta = quat_multiply(medoids[target.bin_index].conjugate(), truth);
    if (delta.w < 0.0)
        delta = delta.negated();
    else if (delta.w == 0.0)
        delta = quat_canonical_sign(delta);
    target.delta = delta;
    target.regress_mask = best <= theta_gate;
    return target;
}

namespace {
std::atomic<std::uint64_t> g_decode_fallbacks{0};
}

Quaternion decode_rotation(int bin_index, const std::array<double, 4>& delta_raw,
                           const RotationBins& bins, int class_id) {
    const auto& medoids = bins.bins_for(class_id);
    if (bin_index < 0 || bin_index >= static_cast<int>(medoids.size()))
        throw std::out_of_range("decode_rotation: bin index out of range");
    for (double v : delta_raw)
        if (!std::isfinite(v)) throw std::domain_error("decode_rotation: non-finite delta");
    double norm = std::sqrt(delta_raw[0] * delta_raw[0] + delta_raw[1] * delta_raw[1] +
                            delta_raw[2] * delta_raw[2] + delta_raw[3] * delta_raw[3]);
    if (norm < 1e-12) {
        g_decode_fallbacks.fetch_add(1, std::memory_order_relaxed);
        return medoids[bin_index];
    }
    Quaternion delta{delta_raw[0] / norm, delta_raw[1] / norm, delta_raw[2] / norm,
                     delta_raw[3] / norm};
    return quat_multiply(medoids[bin_index], delta);
}

std::uint64_t decode_rotation_fallback_count() {
    return g_decode_fallbacks.load(std::memory_order_relaxed);
}

double huber(double x, double delta) {
    if (!(delta > 0.0)) throw std::domain_error("huber: delta must be positive");
    double ax = std::abs(x);
    if (ax <= delta) return 0.5 * x * x;
    return delta * (ax - 0.5 * delta);
}

double huber_grad(double x, double delta) {
    if (!(delta > 0.0)) throw std::domain_error("huber: delta must be positive");
    if (std::abs(x) <= delta) return x;
    return x > 0.0 ? delta : -delta;
}

std::array<double, 2> encode_center(const Box& box,
                                    const std::array<double, 2>& true_center_px) {
    if (!(box.width() > 0.0) || !(box.height() > 0.0))
        throw std::domain_error("encode_center: degenerate box");
    return {(true_center_px[0] - box.cx()) / box.width(),
            (true_center_px[1] - box.cy()) / box.height()};
}

std::array<double, 2> decode_center(const Box& box, const std::array<double, 2>& deltas) {
    if (!(box.width() > 0.0) || !(box.height() > 0.0))
        throw std::domain_error("decode_center: degenerate box");
    return {box.cx() + deltas[0] * box.width(), box.cy() + deltas[1] * box.height()};
}

Vec3 lift_center(const std::array<double, 2>& center_px, double z,
                 const CameraIntrinsics& intr) {
    if (!(z > 0.0)) throw std::domain_error("lift_center: depth must be positive");
    if (!(intr.fx > 0.0) || !(intr.fy > 0.0))
        throw std::domain_error("lift_center: focal lengths must be positive");
    return {(center_px[0] - intr.cx) * z / intr.fx, (center_px[1] - intr.cy) * z / intr.fy, z};
}

std::pair<Pose, std::array<double, 2>> flip_pose(const Pose& pose,
                                                 const std::array<double, 2>& center_delta) {
    Pose flipped = pose;
    flipped.rotation = Quaternion{pose.rotation.w, pose.rotation.x, -pose.rotation.y,
                                  -pose.rotation.z};
    flipped.translation[0] = -pose.translation[0];
    return {flipped, {-center_delta[0], center_delta[1]}};
}

void save_bins(const std::string& path, const RotationBins& bins) {
    nlohmann::json doc;
    doc["format"] = "cadre-bins-v1";
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [cls, qs] : bins.all()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& q : qs) arr.push_back({q.w, q.x, q.y, q.z});
        table[std::to_string(cls)] = std::move(arr);
    }
    doc["bins"] = std::move(table);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_bins: cannot open " + path);
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error("save_bins: write failed for " + path);
}

RotationBins load_bins(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_bins: cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error("load_bins: malformed JSON in " + path);
    if (doc.value("format", "") != "cadre-bins-v1")
        throw std::runtime_error("load_bins: unknown format in " + path);
    std::map<int, std::vector<Quaternion>> table;
    for (const auto& [key, arr] : doc.at("bins").items()) {
        std::vector<Quaternion> qs;
        for (const auto& item : arr) {
            if (item.size() != 4) throw std::runtime_error("load_bins: bad quaternion in " + path);
            qs.push_back(Quaternion{item[0].get<double>(), item[1].get<double>(),
                                    item[2].get<double>(), item[3].get<double>()});
        }
        table.emplace(std::stoi(key), std::move(qs));
    }
    return RotationBins(std::move(table));
}

} // namespace cadre
