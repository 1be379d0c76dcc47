#include "cadre/kmedoids.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cadre/rng.hpp"

namespace cadre {

namespace {

struct NearestInfo {
    int nearest = -1;       // position into medoids
    double d1 = 0.0;        // distance to nearest medoid
    double d2 = 0.0;        // distance to second-nearest medoid
};

} // namespace

KMedoidsResult kmedoids(int n, int k, const std::function<double(int, int)>& dist,
                        std::uint64_t seed) {
    if (k < 1 || k > n) throw std::domain_error("kmedoids: require 1 <= k <= n");

    // Dense distance matrix; clustering inputs here are small (views, bins).
    std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
    #pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double v = dist(i, j);
            d[static_cast<std::size_t>(i) * n + j] = v;
            d[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
    auto dd = [&](int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; };

    // Farthest-first (Gonzalez) init: seeded start, then repeatedly add the
    // point farthest from the chosen set, lowest index on ties. Spreads the
    // seeds so the swap phase is not left stranded among cost-equal local
    // optima (e.g. uneven subsets of a uniform ring).
    Rng rng(seed);
    std::vector<int> medoids;
    medoids.reserve(k);
    std::vector<double> dmin(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
    medoids.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n))));
    for (;;) {
        for (int i = 0; i < n; ++i)
            dmin[static_cast<std::size_t>(i)] =
                std::min(dmin[static_cast<std::size_t>(i)], dd(i, medoids.back()));
        if (static_cast<int>(medoids.size()) == k) break;
        int far = -1;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
            if (dmin[static_cast<std::size_t>(i)] > fd &&
                std::find(medoids.begin(), medoids.end(), i) == medoids.end()) {
                fd = dmin[static_cast<std::size_t>(i)];
                far = i;
            }
        }
        medoids.push_back(far);
    }

    std::vector<char> is_medoid(n, 0);
    for (int m : medoids) is_medoid[m] = 1;

    std::vector<NearestInfo> info(n);
    auto recompute_nearest = [&]() {
        for (int i = 0; i < n; ++i) {
            int best = -1, second = -1;
            double bd = std::numeric_limits<double>::infinity();
            double sd = std::numeric_limits<double>::infinity();
            for (int s = 0; s < k; ++s) {
                const double v = dd(i, medoids[s]);
                if (v < bd) {
                    sd = bd;
                    second = best;
                    bd = v;
                    best = s;
                } else if (v < sd) {
                    sd = v;
                    second = s;
                }
            }
            (void)second;
            // sd stays +inf when k == 1: removing the only medoid forces
            // every point onto the swap candidate.
            info[i] = {best, bd, sd};
        }
    };
    recompute_nearest();

    const int max_rounds = 4 * n * std::max(k, 1);
    for (int round = 0; round < max_rounds; ++round) {
        double best_delta = 0.0;
        int best_slot = -1, best_cand = -1;
        for (int slot = 0; slot < k; ++slot) {
            const int m = medoids[slot];
            for (int h = 0; h < n; ++h) {
                if (is_medoid[h]) continue;
                double delta = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double djh = dd(j, h);
                    if (medoids[info[j].nearest] == m) {
                        delta += std::min(djh, info[j].d2) - info[j].d1;
                    } else if (djh < info[j].d1) {
                        delta += djh - info[j].d1;
                    }
                }
                if (delta < best_delta - 1e-12) {
                    best_delta = delta;
                    best_slot = slot;
                    best_cand = h;
                }
            }
        }
        if (best_slot < 0) break;
        is_medoid[medoids[best_slot]] = 0;
        is_medoid[best_cand] = 1;
        medoids[best_slot] = best_cand;
        recompute_nearest();
    }

    KMedoidsResult result;
    result.medoids = medoids;
    std::sort(result.medoids.begin(), result.medoids.end());
    result.assignment.resize(n);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int s = 0; s < k; ++s) {
            const double v = dd(i, result.medoids[s]);
            if (v < bd) {
                bd = v;
                best = s;
            }
        }
        result.assignment[i] = best;
        result.total_cost += bd;
    }
    return result;
}

} // namespace cadre
