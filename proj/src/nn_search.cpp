#include "cadre/nn_search.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cadre {

namespace {

inline double sq_dist(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

constexpr int kLeafSize = 16;

} // namespace

NearestHit nearest_brute(const std::vector<Vec3>& points, const Vec3& p) {
    if (points.empty()) throw std::domain_error("nearest_brute: empty point set");
    NearestHit best{0, sq_dist(points[0], p)};
    for (int i = 1; i < static_cast<int>(points.size()); ++i) {
        const double d = sq_dist(points[i], p);
        if (d < best.sq_dist) best = {i, d};
    }
    return best;
}

NearestNeighborIndex::NearestNeighborIndex(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw std::domain_error("NearestNeighborIndex: empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    nodes_.push_back({});
    build(0, 0, static_cast<int>(points_.size()), 0);
}

void NearestNeighborIndex::build(int node, int begin, int end, int depth) {
    if (end - begin <= kLeafSize) {
        nodes_[node].axis = -1;
        nodes_[node].begin = begin;
        nodes_[node].end = end;
        return;
    }
    const int axis = depth % 3;
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         if (points_[a][axis] != points_[b][axis])
                             return points_[a][axis] < points_[b][axis];
                         return a < b;
                     });
    nodes_[node].axis = axis;
    nodes_[node].split = points_[order_[mid]][axis];
    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    nodes_[node].left = left;
    nodes_[node].right = left + 1;
    build(left, begin, mid, depth + 1);
    build(left + 1, mid, end, depth + 1);
}

void NearestNeighborIndex::search(int node, const Vec3& p, NearestHit& best) const {
    const Node& nd = nodes_[node];
    if (nd.axis < 0) {
        for (int i = nd.begin; i < nd.end; ++i) {
            const int idx = order_[i];
            const double d = sq_dist(points_[idx], p);
            // lexicographic (distance, index) min matches the brute-force scan
            if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) {
                best = {idx, d};
            }
        }
        return;
    }
    const double diff = p[nd.axis] - nd.split;
    const int near = diff < 0.0 ? nd.left : nd.right;
    const int far = diff < 0.0 ? nd.right : nd.left;
    search(near, p, best);
    if (diff * diff <= best.sq_dist) search(far, p, best);
}

NearestHit NearestNeighborIndex::query(const Vec3& p) const {
    NearestHit best{std::numeric_limits<int>::max(), std::numeric_limits<double>::infinity()};
    search(0, p, best);
    return best;
}

std::vector<NearestHit> NearestNeighborIndex::query_batch(const std::vector<Vec3>& queries) const {
    std::vector<NearestHit> hits(queries.size());
    #pragma omp parallel for schedule(static)
    for (int i = 0; i < static_cast<int>(queries.size()); ++i) {
        hits[i] = query(queries[i]);
    }
    return hits;
}

} // namespace cadre
