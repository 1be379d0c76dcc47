#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cadre {

enum class EmbeddingTag : std::uint8_t { ImageRegion = 0, ObjectView = 1 };

struct EmbeddingVector {
    std::vector<double> values;
    EmbeddingTag tag = EmbeddingTag::ObjectView;
    int class_id = -1;
    int object_id = -1;
    int view_id = -1;
};

// (1/tau) * cosine(x, y). Zero-norm input or non-positive tau is a caller bug.
double scaled_cosine(const std::vector<double>& x, const std::vector<double>& y,
                     double tau);

// Noise-contrastive loss over one anchor:
//   sum_p log(1 + C * sum_n e^{D(a,n)} * e^{-D(a,p)}),  D = scaled_cosine.
// Exponentials are max-shifted, so the value is stable for any D range.
// No negatives -> 0. Empty positives -> domain error.
double nce_loss(const std::vector<double>& anchor,
                const std::vector<std::vector<double>>& positives,
                const std::vector<std::vector<double>>& negatives,
                double contrast_weight, double tau);

// Same loss plus gradients with respect to every input vector. Gradient
// buffers are resized and overwritten.
double nce_loss_grad(const std::vector<double>& anchor,
                     const std::vector<std::vector<double>>& positives,
                     const std::vector<std::vector<double>>& negatives,
                     double contrast_weight, double tau,
                     std::vector<double>& grad_anchor,
                     std::vector<std::vector<double>>& grad_positives,
                     std::vector<std::vector<double>>& grad_negatives);

// Indices of the hardest candidates: positives with the lowest cosine to the
// anchor, negatives with the highest. Ties break by (object_id, view_id).
struct MiningResult {
    std::vector<int> positives;
    std::vector<int> negatives;
};
MiningResult mine_hard(const EmbeddingVector& anchor,
                       const std::vector<EmbeddingVector>& candidate_pos,
                       const std::vector<EmbeddingVector>& candidate_neg,
                       int max_positives, int max_negatives);

// Inverse-sqrt class rebalancing: max(1, sqrt(t / class_freq)).
double repeat_factor(double class_freq, double threshold);

// Exact per-class retrieval over L2-normalized object-view embeddings.
class EmbeddingIndex {
  public:
    // Entries must be tagged object-view, same dimension, unique
    // (class_id, object_id, view_id). Vectors are stored normalized.
    explicit EmbeddingIndex(std::vector<EmbeddingVector> entries);

    struct Scored {
        int object_id = -1;
        int view_id = -1;    // best-scoring view of the object (first on ties)
        double score = 0.0;  // cosine similarity
    };

    // Top-k object ids for the query's class by descending cosine; an object
    // scores by its best view and appears at most once. Equal scores prefer
    // the lower object_id. Unknown class -> out_of_range.
    std::vector<int> retrieve(const std::vector<double>& query, int class_id,
                              int k) const;

    // Same ranking, but also reports the winning view and its cosine.
    std::vector<Scored> retrieve_scored(const std::vector<double>& query,
                                        int class_id, int k) const;

    int dimension() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<EmbeddingVector>& entries() const { return entries_; }

  private:
    std::vector<EmbeddingVector> entries_;  // grouped by class, stable order
    std::vector<std::pair<int, std::pair<std::size_t, std::size_t>>> groups_;
    int dim_ = 0;
};

// Binary dump: uint32 little-endian JSON-header length, the header
// {"format","dim","count","entries":[{tag,class_id,object_id,view_id},...]},
// then count*dim little-endian float32 values in entry order.
void save_embeddings(const std::string& path,
                     const std::vector<EmbeddingVector>& entries);
std::vector<EmbeddingVector> load_embeddings(const std::string& path);

} // namespace cadre
