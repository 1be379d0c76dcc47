#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cadre/box.hpp"
#include "cadre/mesh.hpp"
#include "cadre/nn_search.hpp"

namespace cadre {

// Nearest-neighbor correspondences in both directions between two clouds.
// Chamfer, F1 and normal consistency all reduce over this one structure, so
// the NN work is done once per pair.
struct CrossNearest {
    std::vector<NearestHit> a_to_b;
    std::vector<NearestHit> b_to_a;
};

// KD-tree queries, parallel over points.
CrossNearest cross_nearest(const PointCloud& a, const PointCloud& b);
// Brute-force serial reference; identical results including tie-breaks.
CrossNearest cross_nearest_serial(const PointCloud& a, const PointCloud& b);

// Bidirectional mean *squared* nearest distance (per-direction means, summed).
double chamfer(const PointCloud& a, const PointCloud& b);
double chamfer(const CrossNearest& cn);

// Precision = fraction of a within tau_d (Euclidean) of b; recall likewise
// from b; harmonic mean, 0 when both vanish.
double f1_at(const PointCloud& a, const PointCloud& b, double tau_d);
double f1_at(const CrossNearest& cn, double tau_d);

// Mean |cos| between each point's normal and its nearest neighbor's normal,
// averaged over both directions. Requires normals on both clouds.
double normal_consistency(const PointCloud& a, const PointCloud& b);
double normal_consistency(const PointCloud& a, const PointCloud& b, const CrossNearest& cn);

struct ShapeScore {
    double chamfer = 0.0;
    double normal_consistency = 0.0;
    std::map<double, double> f1_at;
};

ShapeScore shape_score(const PointCloud& a, const PointCloud& b,
                       const std::vector<double>& f1_thresholds);

struct NormalizedPair {
    TriMesh gt;
    TriMesh pred;
    double factor = 1.0;
};

// Scales both meshes by 10 / (longest axis-aligned bbox edge of gt).
NormalizedPair normalize_scale(const TriMesh& gt, const TriMesh& pred);

// Intersection over union; inverted boxes are a domain error.
double box_iou(const Box& a, const Box& b);

// Masks are row-major binary rasters of identical size.
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

} // namespace cadre
