#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cadre/image.hpp"

using namespace cadre;

TEST_CASE("pgm round trip") {
    SUBCASE("values on the 8-bit grid survive exactly") {
        Image img(3, 2);
        double levels[] = {0.0, 17.0 / 255.0, 128.0 / 255.0, 1.0, 255.0 / 255.0, 3.0 / 255.0};
        for (int i = 0; i < 6; ++i) img.pixels[i] = levels[i];
        std::string path = "/tmp/cadre_test_img.pgm";
        save_pgm(path, img);
        Image back = load_pgm(path);
        REQUIRE(back.width == 3);
        REQUIRE(back.height == 2);
        for (int i = 0; i < 6; ++i) CHECK(back.pixels[i] == img.pixels[i]);
        std::remove(path.c_str());
    }
    SUBCASE("arbitrary values quantize within half a level") {
        Image img(4, 4);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = static_cast<double>(i) / (img.pixels.size() - 1) * 0.997;
        std::string path = "/tmp/cadre_test_img_q.pgm";
        save_pgm(path, img);
        Image back = load_pgm(path);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
        std::remove(path.c_str());
    }
    SUBCASE("header comments are skipped") {
        std::string path = "/tmp/cadre_test_img_c.pgm";
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fprintf(f, "P5\n# a comment\n2 1\n255\n");
        unsigned char px[2] = {0, 255};
        std::fwrite(px, 1, 2, f);
        std::fclose(f);
        Image back = load_pgm(path);
        CHECK(back.at(0, 0) == 0.0);
        CHECK(back.at(1, 0) == 1.0);
        std::remove(path.c_str());
    }
    SUBCASE("rejects missing files and wrong magic") {
        CHECK_THROWS_AS(load_pgm("/tmp/cadre_no_such_file.pgm"), std::runtime_error);
        std::string path = "/tmp/cadre_test_img_bad.pgm";
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fprintf(f, "P2\n2 1\n255\n0 255\n");
        std::fclose(f);
        CHECK_THROWS_AS(load_pgm(path), std::runtime_error);
        std::remove(path.c_str());
    }
    SUBCASE("empty image is rejected on save") {
        CHECK_THROWS_AS(save_pgm("/tmp/cadre_test_img_e.pgm", Image()), std::invalid_argument);
    }
}

TEST_CASE("bilinear crop") {
    SUBCASE("identity crop reproduces the source exactly") {
        Image img(5, 4);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = 0.01 * (double)i;
        Image out = crop_bilinear(img, Box{0, 0, 5, 4}, 5, 4);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(out.pixels[i] == img.pixels[i]);
    }
    SUBCASE("constant image stays constant under any ROI") {
        Image img(8, 8, 0.37);
        Image out = crop_bilinear(img, Box{1.3, 2.7, 6.1, 5.9}, 13, 7);
        for (double v : out.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
    SUBCASE("2x upsample of a two-pixel gradient interpolates between centers") {
        Image img(2, 1);
        img.at(0, 0) = 0.0;
        img.at(1, 0) = 1.0;
        Image out = crop_bilinear(img, Box{0, 0, 2, 1}, 4, 1);
        // Sample points fall at source index -0.25, 0.25, 0.75, 1.25 with
        // edge clamping on both ends.
        CHECK(out.at(0, 0) == doctest::Approx(0.0));
        CHECK(out.at(1, 0) == doctest::Approx(0.25));
        CHECK(out.at(2, 0) == doctest::Approx(0.75));
        CHECK(out.at(3, 0) == doctest::Approx(1.0));
    }
    SUBCASE("degenerate ROI and empty output are rejected") {
        Image img(4, 4);
        CHECK_THROWS_AS(crop_bilinear(img, Box{1, 1, 1, 3}, 2, 2), std::domain_error);
        CHECK_THROWS_AS(crop_bilinear(img, Box{0, 0, 2, 2}, 0, 2), std::domain_error);
    }
}

TEST_CASE("nearest crop keeps masks binary") {
    Image img(2, 2);
    img.at(0, 0) = 1.0;
    img.at(1, 0) = 0.0;
    img.at(0, 1) = 0.0;
    img.at(1, 1) = 1.0;
    Image out = crop_nearest(img, Box{0, 0, 2, 2}, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double want = img.at(x / 2, y / 2);
            CHECK(out.at(x, y) == want);
        }
}

TEST_CASE("hflip") {
    Image img(3, 2);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = 0.1 * (double)i;
    Image f = hflip(img);
    CHECK(f.at(0, 0) == img.at(2, 0));
    CHECK(f.at(1, 0) == img.at(1, 0));
    CHECK(f.at(2, 1) == img.at(0, 1));
    Image ff = hflip(f);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(ff.pixels[i] == img.pixels[i]);
}

TEST_CASE("apply_mask") {
    Image feat(2, 2, 0.8);
    SUBCASE("all-ones mask is the identity") {
        Image mask(2, 2, 1.0);
        Image out = apply_mask(feat, mask);
        for (double v : out.pixels) CHECK(v == 0.8);
    }
    SUBCASE("all-zeros mask blanks everything") {
        Image mask(2, 2, 0.0);
        Image out = apply_mask(feat, mask);
        for (double v : out.pixels) CHECK(v == 0.0);
    }
    SUBCASE("threshold sits at 0.5") {
        Image mask(2, 2);
        mask.pixels = {0.0, 0.49, 0.5, 1.0};
        Image out = apply_mask(feat, mask);
        CHECK(out.pixels[0] == 0.0);
        CHECK(out.pixels[1] == 0.0);
        CHECK(out.pixels[2] == 0.8);
        CHECK(out.pixels[3] == 0.8);
    }
    SUBCASE("size mismatch is rejected") {
        CHECK_THROWS_AS(apply_mask(feat, Image(3, 2, 1.0)), std::domain_error);
    }
}

TEST_CASE("adjust_brightness scales and clamps") {
    Image img(2, 1);
    img.pixels = {0.4, 0.8};
    Image half = adjust_brightness(img, 0.5);
    CHECK(half.pixels[0] == doctest::Approx(0.2));
    CHECK(half.pixels[1] == doctest::Approx(0.4));
    Image twice = adjust_brightness(img, 2.0);
    CHECK(twice.pixels[0] == doctest::Approx(0.8));
    CHECK(twice.pixels[1] == 1.0);
    Image dark = adjust_brightness(img, 0.0);
    CHECK(dark.pixels[0] == 0.0);
    CHECK(dark.pixels[1] == 0.0);
}
