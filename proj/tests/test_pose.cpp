#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <vector>

#include "cadre/pose.hpp"
#include "cadre/rng.hpp"

using namespace cadre;

namespace {
Quaternion random_unit(Rng& rng) {
    return quat_normalize({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
}
} // namespace

TEST_CASE("build_bins") {
    SUBCASE("identical rotations: k copies, zero cost allowed") {
        std::map<int, std::vector<Quaternion>> rot;
        rot[0] = std::vector<Quaternion>(6, Quaternion::identity());
        RotationBins bins = build_bins(rot, 3, 1);
        CHECK(bins.bins_for(0).size() == 3);
        for (const auto& q : bins.bins_for(0))
            CHECK(quat_geodesic(q, Quaternion::identity()) == doctest::Approx(0.0));
    }

    SUBCASE("two tight clusters, k=2: one medoid per cluster") {
        std::map<int, std::vector<Quaternion>> rot;
        Quaternion a = Quaternion::identity();
        Quaternion b = Quaternion::from_axis_angle({0, 0, 1}, M_PI);
        for (int i = 0; i < 5; ++i) {
            rot[0].push_back(quat_multiply(a, Quaternion::from_axis_angle({1, 0, 0}, 0.01 * i)));
            rot[0].push_back(quat_multiply(b, Quaternion::from_axis_angle({1, 0, 0}, 0.01 * i)));
        }
        RotationBins bins = build_bins(rot, 2, 7);
        REQUIRE(bins.bins_for(0).size() == 2);
        double d = quat_geodesic(bins.bins_for(0)[0], bins.bins_for(0)[1]);
        CHECK(d > M_PI / 2);  // one per cluster, clusters are geodesic-pi apart
    }

    SUBCASE("k=1 equals the brute-force geodesic medoid") {
        Rng rng(11);
        std::map<int, std::vector<Quaternion>> rot;
        for (int i = 0; i < 9; ++i) rot[4].push_back(random_unit(rng));
        RotationBins bins = build_bins(rot, 1, 3);

        double best = 1e300;
        int who = -1;
        for (int c = 0; c < 9; ++c) {
            double cost = 0.0;
            for (int i = 0; i < 9; ++i) cost += quat_geodesic(rot[4][c], rot[4][i]);
            if (cost < best) {
                best = cost;
                who = c;
            }
        }
        CHECK(quat_geodesic(bins.bins_for(4)[0], rot[4][who]) == doctest::Approx(0.0));
    }

    SUBCASE("too few rotations rejected") {
        std::map<int, std::vector<Quaternion>> rot;
        rot[0] = {Quaternion::identity()};
        CHECK_THROWS_AS(build_bins(rot, 2, 0), std::domain_error);
    }
}

TEST_CASE("encode_rotation") {
    std::map<int, std::vector<Quaternion>> table;
    table[0] = {Quaternion::identity(), Quaternion::from_axis_angle({0, 0, 1}, M_PI / 2),
                Quaternion::from_axis_angle({0, 1, 0}, M_PI)};
    RotationBins bins(std::move(table));
    const double theta = M_PI / 6.0;

    SUBCASE("truth equal to a bin") {
        PoseTarget t = encode_rotation(bins.bins_for(0)[1], bins, 0, theta);
        CHECK(t.bin_index == 1);
        CHECK(t.regress_mask);
        CHECK(quat_geodesic(t.delta, Quaternion::identity()) == doctest::Approx(0.0));
        CHECK(t.delta.w >= 0.0);
    }

    SUBCASE("truth far from every bin fails the gate") {
        // pi/2 about x is pi/2 from identity and the other two bins as well.
        Quaternion truth = Quaternion::from_axis_angle({1, 0, 0}, M_PI / 2);
        PoseTarget t = encode_rotation(truth, bins, 0, theta);
        CHECK_FALSE(t.regress_mask);
    }

    SUBCASE("round trip within the gate, 1e-9") {
        Rng rng(13);
        int gated = 0;
        for (int i = 0; i < 200; ++i) {
            // Perturb a random bin by a small rotation so the gate passes.
            int b = int(rng.uniform_index(3));
            Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
            Quaternion truth =
                quat_multiply(bins.bins_for(0)[b],
                              Quaternion::from_axis_angle(axis, rng.uniform(0, M_PI / 8)));
            PoseTarget t = encode_rotation(truth, bins, 0, theta);
            if (!t.regress_mask) continue;
            ++gated;
            Quaternion back = decode_rotation(
                t.bin_index, {t.delta.w, t.delta.x, t.delta.y, t.delta.z}, bins, 0);
            CHECK(quat_geodesic(back, truth) < 1e-9);
            CHECK(t.delta.w >= 0.0);
            CHECK(quat_geodesic(bins.bins_for(0)[t.bin_index], truth) <= theta + 1e-12);
        }
        CHECK(gated > 150);  // most perturbations stay inside the gate
    }
}

TEST_CASE("decode_rotation") {
    std::map<int, std::vector<Quaternion>> table;
    table[2] = {Quaternion::from_axis_angle({0, 0, 1}, 0.4),
                Quaternion::from_axis_angle({1, 0, 0}, 1.0)};
    RotationBins bins(std::move(table));

    SUBCASE("identity-bias raw delta decodes to the bin medoid exactly") {
        Quaternion q = decode_rotation(1, {0.95, 0.0, 0.0, 0.0}, bins, 2);
        CHECK(quat_geodesic(q, bins.bins_for(2)[1]) == doctest::Approx(0.0));
    }

    SUBCASE("zero raw delta falls back to the medoid and is counted") {
        std::uint64_t before = decode_rotation_fallback_count();
        Quaternion q = decode_rotation(0, {0.0, 0.0, 0.0, 0.0}, bins, 2);
        CHECK(quat_geodesic(q, bins.bins_for(2)[0]) == doctest::Approx(0.0));
        CHECK(decode_rotation_fallback_count() == before + 1);
    }

    SUBCASE("bad inputs") {
        CHECK_THROWS_AS(decode_rotation(5, {1, 0, 0, 0}, bins, 2), std::out_of_range);
        CHECK_THROWS_AS(decode_rotation(0, {1, 0, 0, 0}, bins, 9), std::out_of_range);
        CHECK_THROWS_AS(decode_rotation(0, {std::nan(""), 0, 0, 0}, bins, 2),
                        std::domain_error);
    }
}

TEST_CASE("huber") {
    CHECK(huber(0.0, 0.15) == doctest::Approx(0.0));
    CHECK(huber(0.1, 0.15) == doctest::Approx(0.005));
    CHECK(huber(1.0, 0.15) == doctest::Approx(0.13875));
    CHECK(huber(-1.0, 0.15) == doctest::Approx(0.13875));
    CHECK_THROWS_AS(huber(1.0, 0.0), std::domain_error);

    // Gradient matches finite differences on both branches.
    for (double x : {-2.0, -0.2, -0.1, 0.0, 0.05, 0.15, 0.9}) {
        double h = 1e-7;
        double fd = (huber(x + h, 0.15) - huber(x - h, 0.15)) / (2 * h);
        CHECK(huber_grad(x, 0.15) == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("center codec") {
    Box box{10, 20, 30, 60};  // 20 wide, 40 tall, center (20, 40)

    auto d0 = encode_center(box, {20.0, 40.0});
    CHECK(d0[0] == doctest::Approx(0.0));
    CHECK(d0[1] == doctest::Approx(0.0));

    auto d1 = encode_center(box, {30.0, 40.0});  // right edge midpoint
    CHECK(d1[0] == doctest::Approx(0.5));
    CHECK(d1[1] == doctest::Approx(0.0));

    Rng rng(17);
    for (int i = 0; i < 50; ++i) {
        std::array<double, 2> p{rng.uniform(0, 100), rng.uniform(0, 100)};
        auto back = decode_center(box, encode_center(box, p));
        CHECK(back[0] == doctest::Approx(p[0]).epsilon(1e-12));
        CHECK(back[1] == doctest::Approx(p[1]).epsilon(1e-12));
    }

    Box flat{5, 5, 5, 9};
    CHECK_THROWS_AS(encode_center(flat, {0, 0}), std::domain_error);
    CHECK_THROWS_AS(decode_center(flat, {0, 0}), std::domain_error);
}

TEST_CASE("lift_center") {
    CameraIntrinsics intr{96.0, 96.0, 48.0, 48.0};

    Vec3 on_axis = lift_center({48.0, 48.0}, 5.0, intr);
    CHECK(on_axis[0] == doctest::Approx(0.0));
    CHECK(on_axis[1] == doctest::Approx(0.0));
    CHECK(on_axis[2] == doctest::Approx(5.0));

    Vec3 unit = lift_center({48.0 + 96.0, 48.0}, 1.0, intr);
    CHECK(unit[0] == doctest::Approx(1.0));

    Vec3 z1 = lift_center({70.0, 30.0}, 2.0, intr);
    Vec3 z2 = lift_center({70.0, 30.0}, 4.0, intr);
    CHECK(z2[0] == doctest::Approx(2.0 * z1[0]));
    CHECK(z2[1] == doctest::Approx(2.0 * z1[1]));

    CHECK_THROWS_AS(lift_center({0, 0}, 0.0, intr), std::domain_error);
    CHECK_THROWS_AS(lift_center({0, 0}, -1.0, intr), std::domain_error);
}

TEST_CASE("flip_pose") {
    SUBCASE("identity rotation unchanged") {
        Pose p;
        auto [f, d] = flip_pose(p, {0.0, 0.0});
        CHECK(quat_geodesic(f.rotation, Quaternion::identity()) == doctest::Approx(0.0));
    }

    SUBCASE("rotation about x commutes with the mirror") {
        Pose p;
        p.rotation = Quaternion::from_axis_angle({1, 0, 0}, 0.8);
        auto [f, d] = flip_pose(p, {0.0, 0.0});
        CHECK(quat_geodesic(f.rotation, p.rotation) == doctest::Approx(0.0));
    }

    SUBCASE("involution; translation x and delta x negate") {
        Rng rng(23);
        for (int i = 0; i < 30; ++i) {
            Pose p;
            p.rotation = random_unit(rng);
            p.translation = {rng.normal(), rng.normal(), rng.uniform(1, 5)};
            std::array<double, 2> cd{rng.normal(), rng.normal()};
            auto [f1, d1] = flip_pose(p, cd);
            CHECK(f1.translation[0] == doctest::Approx(-p.translation[0]));
            CHECK(f1.translation[1] == doctest::Approx(p.translation[1]));
            CHECK(d1[0] == doctest::Approx(-cd[0]));
            CHECK(d1[1] == doctest::Approx(cd[1]));
            auto [f2, d2] = flip_pose(f1, d1);
            CHECK(quat_geodesic(f2.rotation, p.rotation) == doctest::Approx(0.0));
            CHECK(f2.translation[0] == doctest::Approx(p.translation[0]));
            CHECK(d2[0] == doctest::Approx(cd[0]));
        }
    }

    SUBCASE("mirror conjugation acts correctly on rotated points") {
        // Flipping must satisfy R' = M R M with M = diag(-1, 1, 1).
        Rng rng(29);
        for (int i = 0; i < 20; ++i) {
            Quaternion q = random_unit(rng);
            Pose p;
            p.rotation = q;
            auto [f, d] = flip_pose(p, {0, 0});
            Vec3 v{rng.normal(), rng.normal(), rng.normal()};
            Vec3 lhs = quat_apply(f.rotation, v);
            Vec3 mv{-v[0], v[1], v[2]};
            Vec3 rmv = quat_apply(q, mv);
            Vec3 rhs{-rmv[0], rmv[1], rmv[2]};
            for (int dax = 0; dax < 3; ++dax)
                CHECK(lhs[dax] == doctest::Approx(rhs[dax]).epsilon(1e-9));
        }
    }
}

TEST_CASE("bins JSON round trip") {
    Rng rng(31);
    std::map<int, std::vector<Quaternion>> table;
    for (int cls = 0; cls < 3; ++cls)
        for (int i = 0; i < 4; ++i) table[cls].push_back(random_unit(rng));
    RotationBins bins(std::move(table));

    std::string path = "/tmp/cadre_test_bins.json";
    save_bins(path, bins);
    RotationBins back = load_bins(path);
    for (int cls = 0; cls < 3; ++cls) {
        REQUIRE(back.bins_for(cls).size() == 4);
        for (int i = 0; i < 4; ++i)
            CHECK(quat_geodesic(back.bins_for(cls)[i], bins.bins_for(cls)[i]) <
                  1e-12);
    }
    CHECK_THROWS_AS(load_bins("/tmp/definitely_missing_bins.json"), std::runtime_error);
    std::remove(path.c_str());
}
