#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "cadre/encoder.hpp"
#include "cadre/rng.hpp"

using namespace cadre;

namespace {

Image random_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

// Reference convolution built on an explicitly zero-padded buffer (the
// production code uses implicit bounds checks instead).
std::vector<double> conv_ref(const ConvParams& p, const std::vector<double>& in, int in_size) {
    const int ps = in_size + 2;
    std::vector<double> pad(static_cast<std::size_t>(p.in_c) * ps * ps, 0.0);
    for (int c = 0; c < p.in_c; ++c)
        for (int y = 0; y < in_size; ++y)
            for (int x = 0; x < in_size; ++x)
                pad[static_cast<std::size_t>((c * ps + y + 1) * ps + x + 1)] =
                    in[static_cast<std::size_t>((c * in_size + y) * in_size + x)];
    const int os = (in_size - 1) / 2 + 1;
    std::vector<double> out(static_cast<std::size_t>(p.out_c) * os * os);
    for (int oc = 0; oc < p.out_c; ++oc)
        for (int oy = 0; oy < os; ++oy)
            for (int ox = 0; ox < os; ++ox) {
                double acc = p.b[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < p.in_c; ++ic)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            acc += p.w[static_cast<std::size_t>(((oc * p.in_c + ic) * 3 + ky) * 3 + kx)] *
                                   pad[static_cast<std::size_t>((ic * ps + 2 * oy + ky) * ps + 2 * ox + kx)];
                out[static_cast<std::size_t>((oc * os + oy) * os + ox)] = acc;
            }
    return out;
}

// Straight-line re-implementation of one stream for the oracle comparison.
std::vector<double> stream_ref(const StreamParams& p, const EncoderConfig& cfg,
                               const Image& input) {
    std::vector<double> x(input.pixels.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (input.pixels[i] - 0.5) / 0.5;
    int s = cfg.input_size;
    for (const ConvParams* conv : {&p.c1, &p.c2, &p.c3}) {
        x = conv_ref(*conv, x, s);
        for (double& v : x) v = v > 0.0 ? v : 0.1 * v;  // leaky rectifier
        s = (s - 1) / 2 + 1;
    }
    std::vector<double> pooled(static_cast<std::size_t>(cfg.width), 0.0);
    for (int c = 0; c < cfg.width; ++c) {
        for (int i = 0; i < s * s; ++i) pooled[static_cast<std::size_t>(c)] += x[static_cast<std::size_t>(c * s * s + i)];
        pooled[static_cast<std::size_t>(c)] /= s * s;
    }
    std::vector<double> e(static_cast<std::size_t>(cfg.embed_dim));
    for (int o = 0; o < cfg.embed_dim; ++o) {
        double acc = p.proj.b[static_cast<std::size_t>(o)];
        for (int i = 0; i < cfg.width; ++i)
            acc += p.proj.w[static_cast<std::size_t>(o * cfg.width + i)] * pooled[static_cast<std::size_t>(i)];
        e[static_cast<std::size_t>(o)] = acc;
    }
    return e;
}

// Scalar objective combining the embedding and every head output with fixed
// coefficients; exercises the full image-stream backward path.
double probe_loss(EncoderParams& params, const Image& input,
                  const std::vector<double>& ce, const std::vector<double>& ck,
                  const std::vector<double>& cr, const std::vector<double>& cc,
                  EncoderParams* grads) {
    StreamCache cache;
    std::vector<double> embed = stream_forward(params.image_stream, params.config, input, &cache);
    std::vector<double> logits = linear_forward(params.heads.pose_class, cache.a3);
    std::vector<double> reg = linear_forward(params.heads.pose_reg, cache.a3);
    std::vector<double> cen = linear_forward(params.heads.center, cache.a3);

    double loss = 0.0;
    for (std::size_t i = 0; i < embed.size(); ++i) loss += ce[i] * embed[i];
    for (std::size_t i = 0; i < logits.size(); ++i) loss += ck[i] * logits[i];
    for (std::size_t i = 0; i < reg.size(); ++i) loss += cr[i] * reg[i];
    for (std::size_t i = 0; i < cen.size(); ++i) loss += cc[i] * cen[i];

    if (grads) {
        std::vector<double> d_feat(cache.a3.size(), 0.0);
        linear_backward(params.heads.pose_class, cache.a3, ck, grads->heads.pose_class, &d_feat);
        std::vector<double> tmp;
        linear_backward(params.heads.pose_reg, cache.a3, cr, grads->heads.pose_reg, &tmp);
        for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat[i] += tmp[i];
        linear_backward(params.heads.center, cache.a3, cc, grads->heads.center, &tmp);
        for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat[i] += tmp[i];
        stream_backward(params.image_stream, params.config, cache, ce, {},
                        grads->image_stream, d_feat);
    }
    return loss;
}

} // namespace

TEST_CASE("stream forward matches the padded-buffer reference") {
    EncoderConfig cfg;
    cfg.input_size = 16;
    cfg.width = 3;
    cfg.embed_dim = 5;
    cfg.num_classes = 2;
    cfg.pose_bins = 4;
    EncoderParams params = init_encoder(cfg, 99);
    for (std::uint64_t s = 0; s < 4; ++s) {
        Image img = random_image(16, 1000 + s);
        auto got = stream_forward(params.view_stream, cfg, img, nullptr);
        auto want = stream_ref(params.view_stream, cfg, img);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("zero parameters map any input to the zero embedding") {
    EncoderConfig cfg;
    cfg.input_size = 8;
    cfg.width = 2;
    cfg.embed_dim = 4;
    EncoderParams params = zero_like(init_encoder(cfg, 1));
    Image img = random_image(8, 7);
    auto e = stream_forward(params.image_stream, cfg, img, nullptr);
    for (double v : e) CHECK(v == 0.0);
}

TEST_CASE("initialization") {
    EncoderConfig cfg;
    cfg.input_size = 32;
    cfg.width = 16;
    cfg.embed_dim = 128;
    cfg.num_classes = 3;
    cfg.pose_bins = 16;
    EncoderParams a = init_encoder(cfg, 42);

    SUBCASE("rotation-residual bias starts at the identity quaternion") {
        for (int c = 0; c < cfg.num_classes; ++c) {
            CHECK(a.heads.pose_reg.b[static_cast<std::size_t>(c) * 4 + 0] == 0.95);
            CHECK(a.heads.pose_reg.b[static_cast<std::size_t>(c) * 4 + 1] == 0.0);
            CHECK(a.heads.pose_reg.b[static_cast<std::size_t>(c) * 4 + 2] == 0.0);
            CHECK(a.heads.pose_reg.b[static_cast<std::size_t>(c) * 4 + 3] == 0.0);
        }
    }
    SUBCASE("head shapes follow classes and bins") {
        CHECK(a.heads.pose_class.out_dim == cfg.num_classes * cfg.pose_bins);
        CHECK(a.heads.pose_reg.out_dim == cfg.num_classes * 4);
        CHECK(a.heads.center.out_dim == cfg.num_classes * 2);
        CHECK(a.image_stream.proj.out_dim == cfg.embed_dim);
    }
    SUBCASE("seeding is deterministic and streams are independent") {
        EncoderParams b = init_encoder(cfg, 42);
        auto ta = parameter_tensors(a), tb = parameter_tensors(b);
        for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
        EncoderParams c = init_encoder(cfg, 43);
        auto tc = parameter_tensors(c);
        CHECK(*ta[0] != *tc[0]);
        CHECK(a.image_stream.c1.w != a.view_stream.c1.w);
    }
    SUBCASE("bad configs are rejected") {
        EncoderConfig bad = cfg;
        bad.width = 0;
        CHECK_THROWS_AS(init_encoder(bad, 1), std::invalid_argument);
        bad = cfg;
        bad.num_classes = 0;
        CHECK_THROWS_AS(init_encoder(bad, 1), std::invalid_argument);
    }
}

TEST_CASE("stream_forward validates input") {
    EncoderConfig cfg;
    cfg.input_size = 8;
    cfg.width = 2;
    cfg.embed_dim = 4;
    EncoderParams params = init_encoder(cfg, 5);
    CHECK_THROWS_AS(stream_forward(params.image_stream, cfg, Image(7, 8), nullptr),
                    std::invalid_argument);
    Image bad(8, 8);
    bad.at(3, 3) = std::nan("");
    CHECK_THROWS_AS(stream_forward(params.image_stream, cfg, bad, nullptr), std::domain_error);
}

TEST_CASE("analytic gradients match central finite differences") {
    EncoderConfig cfg;
    cfg.input_size = 8;
    cfg.width = 2;
    cfg.embed_dim = 3;
    cfg.num_classes = 2;
    cfg.pose_bins = 3;
    EncoderParams params = init_encoder(cfg, 314);
    Image img = random_image(8, 2718);

    Rng rng(161803);
    auto coeffs = [&](int n) {
        std::vector<double> c(static_cast<std::size_t>(n));
        for (double& v : c) v = rng.uniform(-1.0, 1.0);
        return c;
    };
    std::vector<double> ce = coeffs(cfg.embed_dim);
    std::vector<double> ck = coeffs(cfg.num_classes * cfg.pose_bins);
    std::vector<double> cr = coeffs(cfg.num_classes * 4);
    std::vector<double> cc = coeffs(cfg.num_classes * 2);

    EncoderParams grads = zero_like(params);
    probe_loss(params, img, ce, ck, cr, cc, &grads);

    auto ptensors = parameter_tensors(params);
    auto gtensors = parameter_tensors(grads);
    auto names = parameter_names(params);
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t t = 0; t < ptensors.size(); ++t) {
        if (names[t].rfind("view.", 0) == 0) {
            // the probe never touches the view stream; its gradient is zero
            for (double g : *gtensors[t]) CHECK(g == 0.0);
            continue;
        }
        auto& tensor = *ptensors[t];
        // a few spread-out coordinates per tensor
        for (std::size_t i = 0; i < tensor.size(); i += std::max<std::size_t>(1, tensor.size() / 5)) {
            const double saved = tensor[i];
            tensor[i] = saved + h;
            const double up = probe_loss(params, img, ce, ck, cr, cc, nullptr);
            tensor[i] = saved - h;
            const double dn = probe_loss(params, img, ce, ck, cr, cc, nullptr);
            tensor[i] = saved;
            const double fd = (up - dn) / (2.0 * h);
            const double an = (*gtensors[t])[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            INFO(names[t], "[", i, "] fd=", fd, " an=", an);
            CHECK(std::abs(fd - an) / denom < 1e-5);
            ++checked;
        }
    }
    CHECK(checked > 60);
}

TEST_CASE("checkpoint round trip") {
    EncoderConfig cfg;
    cfg.input_size = 8;
    cfg.width = 2;
    cfg.embed_dim = 4;
    cfg.num_classes = 2;
    cfg.pose_bins = 3;
    EncoderParams params = init_encoder(cfg, 7);
    std::string path = "/tmp/cadre_test_ckpt.bin";

    SUBCASE("values survive up to float32 quantization, then exactly") {
        save_checkpoint(path, params);
        EncoderParams back = load_checkpoint(path);
        CHECK(back.config.input_size == cfg.input_size);
        CHECK(back.config.num_classes == cfg.num_classes);
        CHECK(back.config.pose_bins == cfg.pose_bins);
        auto ta = parameter_tensors(params), tb = parameter_tensors(back);
        REQUIRE(ta.size() == tb.size());
        for (std::size_t t = 0; t < ta.size(); ++t) {
            REQUIRE(ta[t]->size() == tb[t]->size());
            for (std::size_t i = 0; i < ta[t]->size(); ++i)
                CHECK((*tb[t])[i] == static_cast<double>(static_cast<float>((*ta[t])[i])));
        }
        // A second round trip is lossless: the values are already float32.
        save_checkpoint(path, back);
        EncoderParams again = load_checkpoint(path);
        auto tc = parameter_tensors(again);
        for (std::size_t t = 0; t < tb.size(); ++t) CHECK(*tb[t] == *tc[t]);
        std::remove(path.c_str());
    }
    SUBCASE("corrupt files are rejected") {
        CHECK_THROWS_AS(load_checkpoint("/tmp/cadre_no_such_ckpt.bin"), std::runtime_error);
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fprintf(f, "junk");
        std::fclose(f);
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
        std::remove(path.c_str());
    }
    SUBCASE("truncated payload is rejected") {
        save_checkpoint(path, params);
        std::FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f != nullptr);
        std::fseek(f, 0, SEEK_END);
        long size = std::ftell(f);
        std::fclose(f);
        // rewrite with the last 64 bytes missing
        std::vector<char> buf(static_cast<std::size_t>(size));
        f = std::fopen(path.c_str(), "rb");
        REQUIRE(std::fread(buf.data(), 1, buf.size(), f) == buf.size());
        std::fclose(f);
        f = std::fopen(path.c_str(), "wb");
        std::fwrite(buf.data(), 1, buf.size() - 64, f);
        std::fclose(f);
        CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
        std::remove(path.c_str());
    }
}
