#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace cadre {

struct KMedoidsResult {
    std::vector<int> medoids;    // item indices, ascending
    std::vector<int> assignment; // per item, position into medoids
    double total_cost = 0.0;     // sum of item-to-assigned-medoid distances
};

// PAM: seeded random initialization, then alternate assignment with the best
// improving single medoid<->non-medoid swap until no swap reduces the total
// assigned distance. Returns a local optimum; deterministic given seed.
// dist(i, j) must be symmetric with dist(i, i) == 0.
// Throws std::domain_error when k < 1 or k > n.
KMedoidsResult kmedoids(int n, int k, const std::function<double(int, int)>& dist,
                        std::uint64_t seed);

} // namespace cadre
