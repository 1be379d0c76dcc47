#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "cadre/embedding.hpp"
#include "cadre/hyperparams.hpp"
#include "cadre/rng.hpp"

using namespace cadre;

namespace {
std::vector<double> random_vec(Rng& rng, int dim = 128) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

EmbeddingVector make_view(std::vector<double> values, int cls, int obj, int view) {
    EmbeddingVector e;
    e.values = std::move(values);
    e.tag = EmbeddingTag::ObjectView;
    e.class_id = cls;
    e.object_id = obj;
    e.view_id = view;
    return e;
}
} // namespace

TEST_CASE("scaled_cosine") {
    std::vector<double> x = {1.0, 2.0, -0.5};
    CHECK(scaled_cosine(x, x, 0.15) == doctest::Approx(1.0 / 0.15));

    std::vector<double> ex = {1, 0}, ey = {0, 1};
    CHECK(scaled_cosine(ex, ey, 0.15) == doctest::Approx(0.0));

    std::vector<double> x2 = {2.0, 4.0, -1.0};  // 2x
    std::vector<double> y = {0.3, -0.8, 0.1};
    CHECK(scaled_cosine(x2, y, 0.5) == doctest::Approx(scaled_cosine(x, y, 0.5)));

    std::vector<double> zero = {0, 0, 0};
    CHECK_THROWS_AS(scaled_cosine(zero, x, 0.15), std::domain_error);
    CHECK_THROWS_AS(scaled_cosine(x, x, 0.0), std::domain_error);

    // Range bound |D| <= 1/tau.
    Rng rng(1);
    for (int i = 0; i < 30; ++i) {
        auto a = random_vec(rng, 16), b = random_vec(rng, 16);
        CHECK(std::abs(scaled_cosine(a, b, 0.15)) <= 1.0 / 0.15 + 1e-12);
    }
}

TEST_CASE("nce_loss values") {
    std::vector<double> anchor = {1.0, 0.0};

    SUBCASE("no negatives -> exactly 0") {
        double l = nce_loss(anchor, {{0.5, 0.5}, {1.0, 2.0}}, {}, 1.5, 0.15);
        CHECK(l == 0.0);
    }

    SUBCASE("one positive at D=2, one negative at D=1, C=1.5") {
        // tau=0.5: positive parallel to the anchor gives D=2; negative at 60
        // degrees gives cosine 0.5, D=1. Loss = log(1 + 1.5/e).
        std::vector<std::vector<double>> pos = {{2.0, 0.0}};
        std::vector<std::vector<double>> neg = {{0.5, std::sqrt(3.0) / 2.0}};
        double l = nce_loss(anchor, pos, neg, 1.5, 0.5);
        CHECK(l == doctest::Approx(std::log(1.0 + 1.5 * std::exp(-1.0))).epsilon(1e-12));
        CHECK(l == doctest::Approx(0.4394278954857406).epsilon(1e-12));
    }

    SUBCASE("duplicating the negatives strictly increases the loss") {
        Rng rng(5);
        auto p = random_vec(rng, 8);
        auto n1 = random_vec(rng, 8), n2 = random_vec(rng, 8);
        auto a = random_vec(rng, 8);
        double base = nce_loss(a, {p}, {n1, n2}, 1.5, 0.15);
        double doubled = nce_loss(a, {p}, {n1, n2, n1, n2}, 1.5, 0.15);
        CHECK(doubled > base);
    }

    SUBCASE("non-negative with negatives present; invariant to rescaling inputs") {
        Rng rng(6);
        auto a = random_vec(rng, 16);
        auto p = random_vec(rng, 16);
        auto n = random_vec(rng, 16);
        double base = nce_loss(a, {p}, {n}, 1.5, 0.15);
        CHECK(base >= 0.0);
        auto a3 = a;
        for (double& x : a3) x *= 3.0;
        auto p7 = p;
        for (double& x : p7) x *= 7.0;
        CHECK(nce_loss(a3, {p7}, {n}, 1.5, 0.15) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("empty positives rejected") {
        CHECK_THROWS_AS(nce_loss(anchor, {}, {{0.0, 1.0}}, 1.5, 0.15), std::domain_error);
    }
}

TEST_CASE("nce_loss_grad matches central finite differences") {
    Rng rng(42);
    const double h = 1e-4;
    for (int trial = 0; trial < 3; ++trial) {
        auto anchor = random_vec(rng);
        std::vector<std::vector<double>> pos = {random_vec(rng), random_vec(rng)};
        std::vector<std::vector<double>> neg = {random_vec(rng), random_vec(rng), random_vec(rng)};

        std::vector<double> ga;
        std::vector<std::vector<double>> gp, gn;
        nce_loss_grad(anchor, pos, neg, 1.5, 0.15, ga, gp, gn);

        auto fd_check = [&](std::vector<double>& target, const std::vector<double>& grad) {
            for (int d = 0; d < 16; ++d) {  // spot-check leading coordinates
                double keep = target[d];
                target[d] = keep + h;
                double up = nce_loss(anchor, pos, neg, 1.5, 0.15);
                target[d] = keep - h;
                double dn = nce_loss(anchor, pos, neg, 1.5, 0.15);
                target[d] = keep;
                double fd = (up - dn) / (2 * h);
                double denom = std::max({std::abs(fd), std::abs(grad[d]), 1e-8});
                CHECK(std::abs(fd - grad[d]) / denom < 1e-4);
            }
        };
        fd_check(anchor, ga);
        fd_check(pos[0], gp[0]);
        fd_check(pos[1], gp[1]);
        fd_check(neg[0], gn[0]);
        fd_check(neg[2], gn[2]);
    }
}

TEST_CASE("mine_hard") {
    // 2-d candidates with controlled cosines against anchor (1, 0).
    EmbeddingVector anchor = make_view({1.0, 0.0}, 0, -1, -1);
    auto at_cosine = [](double c, int obj, int view) {
        return make_view({c, std::sqrt(std::max(0.0, 1.0 - c * c))}, 0, obj, view);
    };

    SUBCASE("fewer positives than the cap -> all returned") {
        std::vector<EmbeddingVector> pos = {at_cosine(0.9, 1, 0), at_cosine(0.2, 1, 1)};
        MiningResult r = mine_hard(anchor, pos, {}, 32, 128);
        CHECK(r.positives.size() == 2);
        CHECK(r.negatives.empty());
    }

    SUBCASE("hardest negatives are the highest similarities, in order") {
        std::vector<EmbeddingVector> neg = {at_cosine(0.5, 1, 0), at_cosine(0.1, 2, 0),
                                            at_cosine(0.3, 3, 0)};
        MiningResult r = mine_hard(anchor, {at_cosine(1.0, 9, 0)}, neg, 1, 2);
        REQUIRE(r.negatives.size() == 2);
        CHECK(r.negatives[0] == 0);  // cosine 0.5
        CHECK(r.negatives[1] == 2);  // cosine 0.3
    }

    SUBCASE("hardest positives are the lowest similarities") {
        std::vector<EmbeddingVector> pos = {at_cosine(0.9, 1, 0), at_cosine(-0.2, 1, 1),
                                            at_cosine(0.4, 1, 2)};
        MiningResult r = mine_hard(anchor, pos, {}, 2, 0);
        REQUIRE(r.positives.size() == 2);
        CHECK(r.positives[0] == 1);  // cosine -0.2
        CHECK(r.positives[1] == 2);  // cosine 0.4
    }

    SUBCASE("sole positive is retained whenever the cap allows one") {
        std::vector<EmbeddingVector> pos = {at_cosine(0.99, 4, 7)};
        MiningResult r = mine_hard(anchor, pos, {}, 1, 0);
        REQUIRE(r.positives.size() == 1);
        CHECK(r.positives[0] == 0);
    }

    SUBCASE("ties break by (object_id, view_id)") {
        std::vector<EmbeddingVector> neg = {at_cosine(0.5, 3, 1), at_cosine(0.5, 2, 9),
                                            at_cosine(0.5, 2, 4)};
        MiningResult r = mine_hard(anchor, {at_cosine(1.0, 9, 0)}, neg, 1, 3);
        REQUIRE(r.negatives.size() == 3);
        CHECK(r.negatives[0] == 2);  // object 2 view 4
        CHECK(r.negatives[1] == 1);  // object 2 view 9
        CHECK(r.negatives[2] == 0);  // object 3
    }
}

TEST_CASE("repeat_factor") {
    CHECK(repeat_factor(0.1, 0.1) == doctest::Approx(1.0));
    CHECK(repeat_factor(0.025, 0.1) == doctest::Approx(2.0));
    CHECK(repeat_factor(0.4, 0.1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(repeat_factor(0.0, 0.1), std::domain_error);
    CHECK_THROWS_AS(repeat_factor(-0.5, 0.1), std::domain_error);

    // Non-increasing in frequency; exactly 1 for frequencies >= t.
    double prev = 1e300;
    for (double f : {0.001, 0.01, 0.05, 0.1, 0.3, 0.7, 1.0}) {
        double r = repeat_factor(f, 0.1);
        CHECK(r <= prev + 1e-12);
        if (f >= 0.1) CHECK(r == doctest::Approx(1.0));
        prev = r;
    }
}

TEST_CASE("default hyperparameters are the published operating point") {
    HyperParams hp;
    CHECK(hp.temperature == doctest::Approx(0.15));
    CHECK(hp.contrast_weight == doctest::Approx(1.5));
    CHECK(hp.huber_delta == doctest::Approx(0.15));
    CHECK(hp.rotation_bins == 16);
    CHECK(hp.theta_gate == doctest::Approx(M_PI / 6.0));
    CHECK(hp.canonical_views == 16);
    CHECK(hp.regions_per_image == 8);
    CHECK(hp.hard_positives == 4 * hp.regions_per_image);
    CHECK(hp.hard_negatives == 16 * hp.regions_per_image);
    CHECK(hp.repeat_threshold == doctest::Approx(0.1));
    CHECK(hp.retrieval_k == 1);
    CHECK(hp.weight_embedding == doctest::Approx(0.5));
    CHECK(hp.weight_pose_class == doctest::Approx(0.25));
    CHECK(hp.weight_pose_reg == doctest::Approx(5.0));
    CHECK(hp.learning_rate == doctest::Approx(0.08));
    CHECK(hp.roi_jitter == doctest::Approx(0.025));
    CHECK(hp.embedding_dim == 128);
}

TEST_CASE("embedding index retrieval") {
    Rng rng(7);

    SUBCASE("query equal to a stored view returns that object") {
        std::vector<EmbeddingVector> entries;
        for (int obj = 0; obj < 4; ++obj)
            for (int view = 0; view < 3; ++view)
                entries.push_back(make_view(random_vec(rng, 16), 0, obj, view));
        EmbeddingIndex index(entries);
        for (int obj = 0; obj < 4; ++obj) {
            auto got = index.retrieve(entries[obj * 3 + 1].values, 0, 1);
            REQUIRE(got.size() == 1);
            CHECK(got[0] == obj);
        }
    }

    SUBCASE("equidistant objects tie-break to the lower object_id") {
        std::vector<EmbeddingVector> entries = {
            make_view({1.0, 1.0, 0.0}, 0, 5, 0),
            make_view({1.0, -1.0, 0.0}, 0, 2, 0),
        };
        EmbeddingIndex index(entries);
        auto got = index.retrieve({1.0, 0.0, 0.0}, 0, 2);
        REQUIRE(got.size() == 2);
        CHECK(got[0] == 2);
        CHECK(got[1] == 5);
    }

    SUBCASE("matches a linear-scan oracle on random queries") {
        std::vector<EmbeddingVector> entries;
        for (int obj = 0; obj < 10; ++obj)
            for (int view = 0; view < 4; ++view)
                entries.push_back(make_view(random_vec(rng, 32), obj % 3, obj, view));
        EmbeddingIndex index(entries);
        for (int t = 0; t < 100; ++t) {
            auto q = random_vec(rng, 32);
            int cls = t % 3;
            // Oracle: best cosine per object within the class, lowest id wins ties.
            double best = -2.0;
            int who = -1;
            for (const auto& e : entries) {
                if (e.class_id != cls) continue;
                double sim = scaled_cosine(q, e.values, 1.0);
                if (sim > best + 1e-15 || (std::abs(sim - best) <= 1e-15 && e.object_id < who)) {
                    best = sim;
                    who = e.object_id;
                }
            }
            auto got = index.retrieve(q, cls, 1);
            REQUIRE(got.size() == 1);
            CHECK(got[0] == who);
        }
    }

    SUBCASE("retrieval is invariant to insertion order") {
        std::vector<EmbeddingVector> entries;
        for (int obj = 0; obj < 6; ++obj)
            for (int view = 0; view < 2; ++view)
                entries.push_back(make_view(random_vec(rng, 8), 1, obj, view));
        EmbeddingIndex fwd(entries);
        std::vector<EmbeddingVector> reversed(entries.rbegin(), entries.rend());
        EmbeddingIndex rev(reversed);
        for (int t = 0; t < 50; ++t) {
            auto q = random_vec(rng, 8);
            CHECK(fwd.retrieve(q, 1, 3) == rev.retrieve(q, 1, 3));
        }
    }

    SUBCASE("unknown class and invalid construction") {
        std::vector<EmbeddingVector> entries = {make_view({1, 0}, 0, 0, 0)};
        EmbeddingIndex index(entries);
        CHECK_THROWS_AS(index.retrieve({1, 0}, 3, 1), std::out_of_range);

        std::vector<EmbeddingVector> dup = {make_view({1, 0}, 0, 0, 0),
                                            make_view({0, 1}, 0, 0, 0)};
        CHECK_THROWS_AS(EmbeddingIndex{dup}, std::invalid_argument);

        EmbeddingVector region = make_view({1, 0}, 0, 1, 0);
        region.tag = EmbeddingTag::ImageRegion;
        std::vector<EmbeddingVector> wrong = {region};
        CHECK_THROWS_AS(EmbeddingIndex{wrong}, std::invalid_argument);
    }
}

TEST_CASE("embedding export round trip") {
    Rng rng(3);
    std::vector<EmbeddingVector> entries;
    for (int i = 0; i < 5; ++i) {
        EmbeddingVector e = make_view(random_vec(rng, 12), i % 2, i, 0);
        if (i % 2) e.tag = EmbeddingTag::ImageRegion;
        entries.push_back(e);
    }
    std::string path = "/tmp/cadre_test_embed.bin";
    save_embeddings(path, entries);
    auto back = load_embeddings(path);
    REQUIRE(back.size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(back[i].tag == entries[i].tag);
        CHECK(back[i].class_id == entries[i].class_id);
        CHECK(back[i].object_id == entries[i].object_id);
        CHECK(back[i].view_id == entries[i].view_id);
        REQUIRE(back[i].values.size() == entries[i].values.size());
        for (std::size_t d = 0; d < entries[i].values.size(); ++d)
            CHECK(back[i].values[d] ==
                  doctest::Approx(entries[i].values[d]).epsilon(1e-6));  // float32 payload
    }

    save_embeddings(path, {});
    CHECK(load_embeddings(path).empty());
    std::remove(path.c_str());
}
