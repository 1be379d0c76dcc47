#pragma once

#include <vector>

#include "cadre/quaternion.hpp"

namespace cadre {

struct NearestHit {
    int index = -1;
    double sq_dist = 0.0;
};

// Exact nearest neighbor against a fixed reference cloud. Ties are broken by
// the lower reference index in both implementations, so the KD path is
// checkable bit-for-bit against the brute-force reference.
class NearestNeighborIndex {
public:
    explicit NearestNeighborIndex(const std::vector<Vec3>& points);

    NearestHit query(const Vec3& p) const;

    // One hit per query, parallel over queries.
    std::vector<NearestHit> query_batch(const std::vector<Vec3>& queries) const;

private:
    struct Node {
        int axis = -1;      // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0; // leaf range into order_
    };

    void build(int node, int begin, int end, int depth);
    void search(int node, const Vec3& p, NearestHit& best) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

// Serial reference: linear scan, lowest index wins ties.
NearestHit nearest_brute(const std::vector<Vec3>& points, const Vec3& p);

} // namespace cadre
