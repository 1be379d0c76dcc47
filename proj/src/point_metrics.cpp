#include "cadre/point_metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cadre {

namespace {

void require_non_empty(const PointCloud& a, const PointCloud& b, const char* who) {
    if (a.points.empty() || b.points.empty()) {
        throw std::domain_error(std::string(who) + ": empty point cloud");
    }
}

} // namespace

CrossNearest cross_nearest(const PointCloud& a, const PointCloud& b) {
    require_non_empty(a, b, "cross_nearest");
    NearestNeighborIndex ia(a.points);
    NearestNeighborIndex ib(b.points);
    CrossNearest cn;
    cn.a_to_b = ib.query_batch(a.points);
    cn.b_to_a = ia.query_batch(b.points);
    return cn;
}

CrossNearest cross_nearest_serial(const PointCloud& a, const PointCloud& b) {
    require_non_empty(a, b, "cross_nearest_serial");
    CrossNearest cn;
    cn.a_to_b.reserve(a.points.size());
    cn.b_to_a.reserve(b.points.size());
    for (const Vec3& p : a.points) cn.a_to_b.push_back(nearest_brute(b.points, p));
    for (const Vec3& p : b.points) cn.b_to_a.push_back(nearest_brute(a.points, p));
    return cn;
}

double chamfer(const CrossNearest& cn) {
    double sum_ab = 0.0, sum_ba = 0.0;
    for (const NearestHit& h : cn.a_to_b) sum_ab += h.sq_dist;
    for (const NearestHit& h : cn.b_to_a) sum_ba += h.sq_dist;
    return sum_ab / static_cast<double>(cn.a_to_b.size()) +
           sum_ba / static_cast<double>(cn.b_to_a.size());
}

double chamfer(const PointCloud& a, const PointCloud& b) {
    return chamfer(cross_nearest(a, b));
}

double f1_at(const CrossNearest& cn, double tau_d) {
    if (!(tau_d > 0.0)) throw std::domain_error("f1_at: threshold must be positive");
    const double t2 = tau_d * tau_d;
    std::size_t hit_a = 0, hit_b = 0;
    for (const NearestHit& h : cn.a_to_b) hit_a += h.sq_dist <= t2;
    for (const NearestHit& h : cn.b_to_a) hit_b += h.sq_dist <= t2;
    const double precision = static_cast<double>(hit_a) / cn.a_to_b.size();
    const double recall = static_cast<double>(hit_b) / cn.b_to_a.size();
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double f1_at(const PointCloud& a, const PointCloud& b, double tau_d) {
    return f1_at(cross_nearest(a, b), tau_d);
}

double normal_consistency(const PointCloud& a, const PointCloud& b, const CrossNearest& cn) {
    if (!a.has_normals() || !b.has_normals()) {
        throw std::domain_error("normal_consistency: both clouds need normals");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        sum += std::fabs(dot(a.normals[i], b.normals[cn.a_to_b[i].index]));
    }
    double sum2 = 0.0;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        sum2 += std::fabs(dot(b.normals[i], a.normals[cn.b_to_a[i].index]));
    }
    return 0.5 * (sum / a.points.size() + sum2 / b.points.size());
}

double normal_consistency(const PointCloud& a, const PointCloud& b) {
    return normal_consistency(a, b, cross_nearest(a, b));
}

ShapeScore shape_score(const PointCloud& a, const PointCloud& b,
                       const std::vector<double>& f1_thresholds) {
    const CrossNearest cn = cross_nearest(a, b);
    ShapeScore score;
    score.chamfer = chamfer(cn);
    score.normal_consistency = (a.has_normals() && b.has_normals())
                                   ? normal_consistency(a, b, cn)
                                   : 0.0;
    for (double t : f1_thresholds) score.f1_at[t] = f1_at(cn, t);
    return score;
}

NormalizedPair normalize_scale(const TriMesh& gt, const TriMesh& pred) {
    if (gt.vertices.empty()) throw std::domain_error("normalize_scale: empty ground truth");
    const double edge = bounding_box(gt).longest_edge();
    if (!(edge > 0.0)) throw std::domain_error("normalize_scale: ground truth has zero extent");
    const double factor = 10.0 / edge;
    return {scale_mesh(gt, factor), scale_mesh(pred, factor), factor};
}

double box_iou(const Box& a, const Box& b) {
    if (!(a.x0 < a.x1 && a.y0 < a.y1 && b.x0 < b.x1 && b.y0 < b.y1)) {
        throw std::domain_error("box_iou: inverted box");
    }
    const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = ix * iy;
    const double uni = a.width() * a.height() + b.width() * b.height() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw std::domain_error("mask_iou: resolution mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a[i] != 0, pb = b[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

} // namespace cadre
