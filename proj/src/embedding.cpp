#include "cadre/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace cadre {

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double checked_norm(const std::vector<double>& v, const char* who) {
    double n = vec_norm(v);
    if (!(n > 0.0) || !std::isfinite(n))
        throw std::domain_error(std::string(who) + ": zero or non-finite vector");
    return n;
}

void check_same_dim(std::size_t a, std::size_t b, const char* who) {
    if (a != b) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

} // namespace

double scaled_cosine(const std::vector<double>& x, const std::vector<double>& y,
                     double tau) {
    if (!(tau > 0.0)) throw std::domain_error("scaled_cosine: tau must be positive");
    check_same_dim(x.size(), y.size(), "scaled_cosine");
    double nx = checked_norm(x, "scaled_cosine");
    double ny = checked_norm(y, "scaled_cosine");
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    return dot / (nx * ny * tau);
}

namespace {

// Loss core shared by the forward-only and gradient paths. Works on the
// similarity values; reports d(loss)/d(similarity) for every input.
double nce_core(const std::vector<double>& sim_pos, const std::vector<double>& sim_neg,
                double contrast_weight, std::vector<double>* dpos,
                std::vector<double>* dneg) {
    if (sim_pos.empty()) throw std::domain_error("nce_loss: need at least one positive");
    if (dpos) dpos->assign(sim_pos.size(), 0.0);
    if (dneg) dneg->assign(sim_neg.size(), 0.0);
    if (sim_neg.empty()) return 0.0;

    double shift = sim_pos[0];
    for (double d : sim_pos) shift = std::max(shift, d);
    for (double d : sim_neg) shift = std::max(shift, d);

    double neg_mass = 0.0;  // C * sum_n e^{D_n - shift}
    for (double d : sim_neg) neg_mass += std::exp(d - shift);
    neg_mass *= contrast_weight;

    double loss = 0.0;
    double inv_sum = 0.0;  // sum_p 1 / (e^{D_p - shift} + neg_mass)
    for (std::size_t p = 0; p < sim_pos.size(); ++p) {
        double ep = std::exp(sim_pos[p] - shift);
        loss += std::log(ep + neg_mass) - (sim_pos[p] - shift);
        double denom = ep + neg_mass;
        inv_sum += 1.0 / denom;
        if (dpos) (*dpos)[p] = -neg_mass / denom;
    }
    if (dneg)
        for (std::size_t n = 0; n < sim_neg.size(); ++n)
            (*dneg)[n] = contrast_weight * std::exp(sim_neg[n] - shift) * inv_sum;
    return loss;
}

// d(scaled_cosine(a, v)) contributions: returns the pair's cosine; the two
// gradient outputs are accumulated with weight g.
void accumulate_cosine_grad(const std::vector<double>& a, double na,
                            const std::vector<double>& v, double tau, double g,
                            std::vector<double>& grad_a, std::vector<double>& grad_v) {
    double nv = checked_norm(v, "nce_loss");
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += a[i] * v[i];
    c /= na * nv;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double ah = a[i] / na, vh = v[i] / nv;
        grad_a[i] += g * (vh - c * ah) / (tau * na);
        grad_v[i] += g * (ah - c * vh) / (tau * nv);
    }
}

} // namespace

double nce_loss(const std::vector<double>& anchor,
                const std::vector<std::vector<double>>& positives,
                const std::vector<std::vector<double>>& negatives,
                double contrast_weight, double tau) {
    std::vector<double> sp, sn;
    sp.reserve(positives.size());
    sn.reserve(negatives.size());
    for (const auto& p : positives) sp.push_back(scaled_cosine(anchor, p, tau));
    for (const auto& n : negatives) sn.push_back(scaled_cosine(anchor, n, tau));
    if (positives.empty()) throw std::domain_error("nce_loss: need at least one positive");
    return nce_core(sp, sn, contrast_weight, nullptr, nullptr);
}

double nce_loss_grad(const std::vector<double>& anchor,
                     const std::vector<std::vector<double>>& positives,
                     const std::vector<std::vector<double>>& negatives,
                     double contrast_weight, double tau,
                     std::vector<double>& grad_anchor,
                     std::vector<std::vector<double>>& grad_positives,
                     std::vector<std::vector<double>>& grad_negatives) {
    if (positives.empty()) throw std::domain_error("nce_loss: need at least one positive");
    std::vector<double> sp, sn;
    sp.reserve(positives.size());
    sn.reserve(negatives.size());
    for (const auto& p : positives) sp.push_back(scaled_cosine(anchor, p, tau));
    for (const auto& n : negatives) sn.push_back(scaled_cosine(anchor, n, tau));

    std::vector<double> dpos, dneg;
    double loss = nce_core(sp, sn, contrast_weight, &dpos, &dneg);

    grad_anchor.assign(anchor.size(), 0.0);
    grad_positives.assign(positives.size(), std::vector<double>(anchor.size(), 0.0));
    grad_negatives.assign(negatives.size(), std::vector<double>(anchor.size(), 0.0));
    double na = checked_norm(anchor, "nce_loss");
    for (std::size_t p = 0; p < positives.size(); ++p)
        if (dpos[p] != 0.0)
            accumulate_cosine_grad(anchor, na, positives[p], tau, dpos[p], grad_anchor,
                                   grad_positives[p]);
    for (std::size_t n = 0; n < negatives.size(); ++n)
        if (dneg[n] != 0.0)
            accumulate_cosine_grad(anchor, na, negatives[n], tau, dneg[n], grad_anchor,
                                   grad_negatives[n]);
    return loss;
}

MiningResult mine_hard(const EmbeddingVector& anchor,
                       const std::vector<EmbeddingVector>& candidate_pos,
                       const std::vector<EmbeddingVector>& candidate_neg,
                       int max_positives, int max_negatives) {
    auto similarities = [&anchor](const std::vector<EmbeddingVector>& cands) {
        std::vector<double> sims(cands.size());
        for (std::size_t i = 0; i < cands.size(); ++i)
            sims[i] = scaled_cosine(anchor.values, cands[i].values, 1.0);
        return sims;
    };
    auto select = [](const std::vector<EmbeddingVector>& cands,
                     const std::vector<double>& sims, int cap, bool lowest_first) {
        std::vector<int> order(cands.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sims[a] != sims[b]) return lowest_first ? sims[a] < sims[b] : sims[a] > sims[b];
            if (cands[a].object_id != cands[b].object_id)
                return cands[a].object_id < cands[b].object_id;
            return cands[a].view_id < cands[b].view_id;
        });
        if (cap < 0) cap = 0;
        if (order.size() > static_cast<std::size_t>(cap)) order.resize(cap);
        return order;
    };
    MiningResult out;
    out.positives = select(candidate_pos, similarities(candidate_pos), max_positives, true);
    out.negatives = select(candidate_neg, similarities(candidate_neg), max_negatives, false);
    return out;
}

double repeat_factor(double class_freq, double threshold) {
    if (!(class_freq > 0.0) || !std::isfinite(class_freq))
        throw std::domain_error("repeat_factor: frequency must be positive");
    if (!(threshold > 0.0))
        throw std::domain_error("repeat_factor: threshold must be positive");
    return std::max(1.0, std::sqrt(threshold / class_freq));
}

EmbeddingIndex::EmbeddingIndex(std::vector<EmbeddingVector> entries)
    : entries_(std::move(entries)) {
    if (!entries_.empty()) dim_ = static_cast<int>(entries_[0].values.size());
    std::map<std::tuple<int, int, int>, bool> seen;
    for (auto& e : entries_) {
        if (e.tag != EmbeddingTag::ObjectView)
            throw std::invalid_argument("EmbeddingIndex: entries must be object views");
        check_same_dim(e.values.size(), static_cast<std::size_t>(dim_), "EmbeddingIndex");
        double n = checked_norm(e.values, "EmbeddingIndex");
        for (double& x : e.values) x /= n;
        auto key = std::make_tuple(e.class_id, e.object_id, e.view_id);
        if (!seen.emplace(key, true).second)
            throw std::invalid_argument("EmbeddingIndex: duplicate (class, object, view)");
    }
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const EmbeddingVector& a, const EmbeddingVector& b) {
                         return a.class_id < b.class_id;
                     });
    for (std::size_t i = 0; i < entries_.size();) {
        std::size_t j = i;
        while (j < entries_.size() && entries_[j].class_id == entries_[i].class_id) ++j;
        groups_.push_back({entries_[i].class_id, {i, j}});
        i = j;
    }
}

std::vector<int> EmbeddingIndex::retrieve(const std::vector<double>& query, int class_id,
                                          int k) const {
    std::vector<int> out;
    for (const auto& s : retrieve_scored(query, class_id, k)) out.push_back(s.object_id);
    return out;
}

std::vector<EmbeddingIndex::Scored> EmbeddingIndex::retrieve_scored(
    const std::vector<double>& query, int class_id, int k) const {
    if (k < 1) throw std::invalid_argument("EmbeddingIndex::retrieve: k must be >= 1");
    auto it = std::lower_bound(groups_.begin(), groups_.end(), class_id,
                               [](const auto& g, int c) { return g.first < c; });
    if (it == groups_.end() || it->first != class_id)
        throw std::out_of_range("EmbeddingIndex::retrieve: unknown class");
    check_same_dim(query.size(), static_cast<std::size_t>(dim_), "EmbeddingIndex::retrieve");
    double nq = checked_norm(query, "EmbeddingIndex::retrieve");

    std::map<int, std::pair<double, int>> best;  // object_id -> (best cosine, view)
    for (std::size_t i = it->second.first; i < it->second.second; ++i) {
        const auto& e = entries_[i];
        double dot = 0.0;
        for (int d = 0; d < dim_; ++d) dot += query[d] * e.values[d];
        dot /= nq;
        auto [pos, fresh] = best.emplace(e.object_id, std::make_pair(dot, e.view_id));
        if (!fresh && dot > pos->second.first) pos->second = {dot, e.view_id};
    }
    std::vector<Scored> ranked;
    ranked.reserve(best.size());
    for (const auto& [oid, sv] : best) ranked.push_back({oid, sv.second, sv.first});
    std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.object_id < b.object_id;
    });
    if (static_cast<int>(ranked.size()) > k) ranked.resize(static_cast<std::size_t>(k));
    return ranked;
}

namespace {

const char* tag_name(EmbeddingTag t) {
    return t == EmbeddingTag::ImageRegion ? "image-region" : "object-view";
}

EmbeddingTag tag_from_name(const std::string& s) {
    if (s == "image-region") return EmbeddingTag::ImageRegion;
    if (s == "object-view") return EmbeddingTag::ObjectView;
    throw std::runtime_error("embedding file: unknown tag '" + s + "'");
}

} // namespace

void save_embeddings(const std::string& path,
                     const std::vector<EmbeddingVector>& entries) {
    std::size_t dim = entries.empty() ? 0 : entries[0].values.size();
    nlohmann::json header;
    header["format"] = "cadre-embedding-v1";
    header["dim"] = dim;
    header["count"] = entries.size();
    header["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        check_same_dim(e.values.size(), dim, "save_embeddings");
        header["entries"].push_back({{"tag", tag_name(e.tag)},
                                     {"class_id", e.class_id},
                                     {"object_id", e.object_id},
                                     {"view_id", e.view_id}});
    }
    std::string htext = header.dump();

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_embeddings: cannot open " + path);
    std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                             static_cast<unsigned char>((hlen >> 8) & 0xff),
                             static_cast<unsigned char>((hlen >> 16) & 0xff),
                             static_cast<unsigned char>((hlen >> 24) & 0xff)};
    bool ok = std::fwrite(lenb, 1, 4, f) == 4 &&
              std::fwrite(htext.data(), 1, htext.size(), f) == htext.size();
    std::vector<float> row(dim);
    for (const auto& e : entries) {
        for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(e.values[d]);
        ok = ok && std::fwrite(row.data(), sizeof(float), dim, f) == dim;
    }
    if (std::fclose(f) != 0 || !ok)
        throw std::runtime_error("save_embeddings: write failed for " + path);
}

std::vector<EmbeddingVector> load_embeddings(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load_embeddings: cannot open " + path);
    auto fail = [&](const std::string& msg) -> std::runtime_error {
        std::fclose(f);
        return std::runtime_error("load_embeddings: " + msg + " in " + path);
    };
    unsigned char lenb[4];
    if (std::fread(lenb, 1, 4, f) != 4) throw fail("truncated header length");
    std::uint32_t hlen = static_cast<std::uint32_t>(lenb[0]) |
                         (static_cast<std::uint32_t>(lenb[1]) << 8) |
                         (static_cast<std::uint32_t>(lenb[2]) << 16) |
                         (static_cast<std::uint32_t>(lenb[3]) << 24);
    std::string htext(hlen, '\0');
    if (std::fread(htext.data(), 1, hlen, f) != hlen) throw fail("truncated header");

    nlohmann::json header = nlohmann::json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw fail("malformed header JSON");
    if (header.value("format", "") != "cadre-embedding-v1") throw fail("unknown format");
    std::size_t dim = header.at("dim").get<std::size_t>();
    std::size_t count = header.at("count").get<std::size_t>();
    if (header.at("entries").size() != count) throw fail("entry list does not match count");

    std::vector<EmbeddingVector> out(count);
    std::vector<float> row(dim);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& meta = header.at("entries")[i];
        out[i].tag = tag_from_name(meta.at("tag").get<std::string>());
        out[i].class_id = meta.at("class_id").get<int>();
        out[i].object_id = meta.at("object_id").get<int>();
        out[i].view_id = meta.at("view_id").get<int>();
        if (std::fread(row.data(), sizeof(float), dim, f) != dim)
            throw fail("truncated payload");
        out[i].values.assign(row.begin(), row.end());
    }
    std::fclose(f);
    return out;
}

} // namespace cadre
