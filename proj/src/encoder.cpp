#include "cadre/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "cadre/rng.hpp"

namespace cadre {

namespace {

int conv_out_size(int in_size) { return (in_size - 1) / 2 + 1; }

// 3x3 convolution, stride 2, zero padding 1.
void conv_forward(const ConvParams& p, const std::vector<double>& in, int in_size,
                  std::vector<double>& out) {
    const int os = conv_out_size(in_size);
    out.assign(static_cast<std::size_t>(p.out_c) * os * os, 0.0);
    for (int oc = 0; oc < p.out_c; ++oc) {
        for (int oy = 0; oy < os; ++oy) {
            for (int ox = 0; ox < os; ++ox) {
                double acc = p.b[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < p.in_c; ++ic) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in_size) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= in_size) continue;
                            acc += p.w[static_cast<std::size_t>(((oc * p.in_c + ic) * 3 + ky) * 3 + kx)] *
                                   in[static_cast<std::size_t>((ic * in_size + iy) * in_size + ix)];
                        }
                    }
                }
                out[static_cast<std::size_t>((oc * os + oy) * os + ox)] = acc;
            }
        }
    }
}

void conv_backward(const ConvParams& p, const std::vector<double>& in, int in_size,
                   const std::vector<double>& dout, ConvParams& grads,
                   std::vector<double>* din) {
    const int os = conv_out_size(in_size);
    if (din) din->assign(in.size(), 0.0);
    for (int oc = 0; oc < p.out_c; ++oc) {
        for (int oy = 0; oy < os; ++oy) {
            for (int ox = 0; ox < os; ++ox) {
                const double g = dout[static_cast<std::size_t>((oc * os + oy) * os + ox)];
                if (g == 0.0) continue;
                grads.b[static_cast<std::size_t>(oc)] += g;
                for (int ic = 0; ic < p.in_c; ++ic) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in_size) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= in_size) continue;
                            const std::size_t wi =
                                static_cast<std::size_t>(((oc * p.in_c + ic) * 3 + ky) * 3 + kx);
                            const std::size_t ii =
                                static_cast<std::size_t>((ic * in_size + iy) * in_size + ix);
                            grads.w[wi] += g * in[ii];
                            if (din) (*din)[ii] += g * p.w[wi];
                        }
                    }
                }
            }
        }
    }
}

// Leaky rectifier. Without batch normalization a hard rectifier lets a
// channel whose pre-activation goes negative for every input die
// permanently (its gradient becomes identically zero); the small negative
// slope keeps a recovery path open.
constexpr double kLeakySlope = 0.1;

void relu_forward(const std::vector<double>& z, std::vector<double>& a) {
    a.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : kLeakySlope * z[i];
}

void relu_backward(const std::vector<double>& z, std::vector<double>& d) {
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i] <= 0.0) d[i] *= kLeakySlope;
}

ConvParams make_conv(int in_c, int out_c, Rng& rng) {
    ConvParams p;
    p.in_c = in_c;
    p.out_c = out_c;
    p.w.resize(static_cast<std::size_t>(out_c) * in_c * 9);
    p.b.assign(static_cast<std::size_t>(out_c), 0.0);
    const double scale = std::sqrt(2.0 / (in_c * 9.0));
    for (double& v : p.w) v = rng.normal() * scale;
    return p;
}

LinearParams make_linear(int in_dim, int out_dim, Rng& rng) {
    LinearParams p;
    p.in_dim = in_dim;
    p.out_dim = out_dim;
    p.w.resize(static_cast<std::size_t>(out_dim) * in_dim);
    p.b.assign(static_cast<std::size_t>(out_dim), 0.0);
    const double scale = std::sqrt(2.0 / in_dim);
    for (double& v : p.w) v = rng.normal() * scale;
    return p;
}

StreamParams make_stream(const EncoderConfig& cfg, Rng& rng) {
    StreamParams s;
    s.c1 = make_conv(1, cfg.width, rng);
    s.c2 = make_conv(cfg.width, cfg.width, rng);
    s.c3 = make_conv(cfg.width, cfg.width, rng);
    s.proj = make_linear(cfg.width, cfg.embed_dim, rng);
    return s;
}

void zero_conv(ConvParams& p) {
    std::fill(p.w.begin(), p.w.end(), 0.0);
    std::fill(p.b.begin(), p.b.end(), 0.0);
}

void zero_linear(LinearParams& p) {
    std::fill(p.w.begin(), p.w.end(), 0.0);
    std::fill(p.b.begin(), p.b.end(), 0.0);
}

void collect_stream(StreamParams& s, const char* prefix,
                    std::vector<std::vector<double>*>* tensors,
                    std::vector<std::string>* names) {
    struct Entry { std::vector<double>* t; std::string n; };
    const Entry entries[] = {
        {&s.c1.w, "c1.w"}, {&s.c1.b, "c1.b"}, {&s.c2.w, "c2.w"}, {&s.c2.b, "c2.b"},
        {&s.c3.w, "c3.w"}, {&s.c3.b, "c3.b"}, {&s.proj.w, "proj.w"}, {&s.proj.b, "proj.b"},
    };
    for (const auto& e : entries) {
        if (tensors) tensors->push_back(e.t);
        if (names) names->push_back(std::string(prefix) + "." + e.n);
    }
}

void collect_heads(HeadParams& h, std::vector<std::vector<double>*>* tensors,
                   std::vector<std::string>* names) {
    struct Entry { std::vector<double>* t; const char* n; };
    const Entry entries[] = {
        {&h.pose_class.w, "heads.pose_class.w"}, {&h.pose_class.b, "heads.pose_class.b"},
        {&h.pose_reg.w, "heads.pose_reg.w"},     {&h.pose_reg.b, "heads.pose_reg.b"},
        {&h.center.w, "heads.center.w"},         {&h.center.b, "heads.center.b"},
    };
    for (const auto& e : entries) {
        if (tensors) tensors->push_back(e.t);
        if (names) names->push_back(e.n);
    }
}

void collect_all(EncoderParams& p, std::vector<std::vector<double>*>* tensors,
                 std::vector<std::string>* names) {
    collect_stream(p.image_stream, "image", tensors, names);
    collect_stream(p.view_stream, "view", tensors, names);
    collect_heads(p.heads, tensors, names);
}

} // namespace

int head_input_dim(const EncoderConfig& config) {
    const int s1 = conv_out_size(config.input_size);
    const int s2 = conv_out_size(s1);
    const int s3 = conv_out_size(s2);
    return config.width * s3 * s3;
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    if (config.input_size < 8 || config.width < 1 || config.embed_dim < 1 ||
        config.num_classes < 1 || config.pose_bins < 1)
        throw std::invalid_argument("init_encoder: bad config");
    Rng rng(seed);
    EncoderParams p;
    p.config = config;
    p.image_stream = make_stream(config, rng);
    p.view_stream = make_stream(config, rng);
    const int hd = head_input_dim(config);
    p.heads.pose_class = make_linear(hd, config.num_classes * config.pose_bins, rng);
    p.heads.pose_reg = make_linear(hd, config.num_classes * 4, rng);
    p.heads.center = make_linear(hd, config.num_classes * 2, rng);
    // Small head weights keep early logits near the bias.
    for (double& v : p.heads.pose_reg.w) v *= 0.01;
    for (double& v : p.heads.center.w) v *= 0.01;
    // Bias the rotation residual toward the identity quaternion so decoding an
    // untrained head returns the bin medoid.
    for (int c = 0; c < config.num_classes; ++c)
        p.heads.pose_reg.b[static_cast<std::size_t>(c) * 4] = 0.95;
    return p;
}

EncoderParams zero_like(const EncoderParams& params) {
    EncoderParams g = params;
    zero_conv(g.image_stream.c1); zero_conv(g.image_stream.c2); zero_conv(g.image_stream.c3);
    zero_linear(g.image_stream.proj);
    zero_conv(g.view_stream.c1); zero_conv(g.view_stream.c2); zero_conv(g.view_stream.c3);
    zero_linear(g.view_stream.proj);
    zero_linear(g.heads.pose_class);
    zero_linear(g.heads.pose_reg);
    zero_linear(g.heads.center);
    return g;
}

std::vector<std::vector<double>*> parameter_tensors(EncoderParams& params) {
    std::vector<std::vector<double>*> out;
    collect_all(params, &out, nullptr);
    return out;
}

std::vector<std::string> parameter_names(const EncoderParams& params) {
    std::vector<std::string> out;
    collect_all(const_cast<EncoderParams&>(params), nullptr, &out);
    return out;
}

std::vector<double> stream_forward(const StreamParams& p, const EncoderConfig& cfg,
                                   const Image& input, StreamCache* cache) {
    if (input.width != cfg.input_size || input.height != cfg.input_size)
        throw std::invalid_argument("stream_forward: input size mismatch");
    const int s0 = cfg.input_size;
    std::vector<double> x0(input.pixels.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        if (!std::isfinite(input.pixels[i]))
            throw std::domain_error("stream_forward: non-finite input");
        x0[i] = (input.pixels[i] - 0.5) / 0.5;
    }

    std::vector<double> z1, a1, z2, a2, z3, a3;
    conv_forward(p.c1, x0, s0, z1);
    relu_forward(z1, a1);
    const int s1 = conv_out_size(s0);
    conv_forward(p.c2, a1, s1, z2);
    relu_forward(z2, a2);
    const int s2 = conv_out_size(s1);
    conv_forward(p.c3, a2, s2, z3);
    relu_forward(z3, a3);
    const int s3 = conv_out_size(s2);

    std::vector<double> pooled(static_cast<std::size_t>(cfg.width), 0.0);
    const double inv_area = 1.0 / (static_cast<double>(s3) * s3);
    for (int c = 0; c < cfg.width; ++c) {
        double acc = 0.0;
        for (int i = 0; i < s3 * s3; ++i)
            acc += a3[static_cast<std::size_t>(c * s3 * s3 + i)];
        pooled[static_cast<std::size_t>(c)] = acc * inv_area;
    }

    std::vector<double> embed = linear_forward(p.proj, pooled);
    if (cache) {
        cache->x0 = std::move(x0);
        cache->z1 = std::move(z1); cache->a1 = std::move(a1);
        cache->z2 = std::move(z2); cache->a2 = std::move(a2);
        cache->z3 = std::move(z3); cache->a3 = std::move(a3);
        cache->pooled = std::move(pooled);
    }
    return embed;
}

void stream_backward(const StreamParams& p, const EncoderConfig& cfg,
                     const StreamCache& cache, const std::vector<double>& d_embed,
                     const std::vector<double>& d_pooled_extra, StreamParams& grads,
                     const std::vector<double>& d_spatial_extra) {
    const int s0 = cfg.input_size;
    const int s1 = conv_out_size(s0);
    const int s2 = conv_out_size(s1);
    const int s3 = conv_out_size(s2);

    std::vector<double> d_pooled(static_cast<std::size_t>(cfg.width), 0.0);
    if (!d_embed.empty())
        linear_backward(p.proj, cache.pooled, d_embed, grads.proj, &d_pooled);
    if (!d_pooled_extra.empty()) {
        if (d_pooled_extra.size() != d_pooled.size())
            throw std::invalid_argument("stream_backward: pooled gradient size mismatch");
        for (std::size_t i = 0; i < d_pooled.size(); ++i) d_pooled[i] += d_pooled_extra[i];
    }

    std::vector<double> d_a3(cache.a3.size());
    const double inv_area = 1.0 / (static_cast<double>(s3) * s3);
    for (int c = 0; c < cfg.width; ++c)
        for (int i = 0; i < s3 * s3; ++i)
            d_a3[static_cast<std::size_t>(c * s3 * s3 + i)] =
                d_pooled[static_cast<std::size_t>(c)] * inv_area;
    if (!d_spatial_extra.empty()) {
        if (d_spatial_extra.size() != d_a3.size())
            throw std::invalid_argument("stream_backward: spatial gradient size mismatch");
        for (std::size_t i = 0; i < d_a3.size(); ++i) d_a3[i] += d_spatial_extra[i];
    }

    relu_backward(cache.z3, d_a3);
    std::vector<double> d_a2;
    conv_backward(p.c3, cache.a2, s2, d_a3, grads.c3, &d_a2);
    relu_backward(cache.z2, d_a2);
    std::vector<double> d_a1;
    conv_backward(p.c2, cache.a1, s1, d_a2, grads.c2, &d_a1);
    relu_backward(cache.z1, d_a1);
    conv_backward(p.c1, cache.x0, s0, d_a1, grads.c1, nullptr);
}

std::vector<double> linear_forward(const LinearParams& p, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != p.in_dim)
        throw std::invalid_argument("linear_forward: input size mismatch");
    std::vector<double> y(static_cast<std::size_t>(p.out_dim));
    for (int o = 0; o < p.out_dim; ++o) {
        double acc = p.b[static_cast<std::size_t>(o)];
        const double* row = p.w.data() + static_cast<std::size_t>(o) * p.in_dim;
        for (int i = 0; i < p.in_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
    return y;
}

void linear_backward(const LinearParams& p, const std::vector<double>& x,
                     const std::vector<double>& dy, LinearParams& grads,
                     std::vector<double>* dx) {
    if (static_cast<int>(dy.size()) != p.out_dim || static_cast<int>(x.size()) != p.in_dim)
        throw std::invalid_argument("linear_backward: size mismatch");
    if (dx) dx->assign(static_cast<std::size_t>(p.in_dim), 0.0);
    for (int o = 0; o < p.out_dim; ++o) {
        const double g = dy[static_cast<std::size_t>(o)];
        if (g == 0.0) continue;
        grads.b[static_cast<std::size_t>(o)] += g;
        double* grow = grads.w.data() + static_cast<std::size_t>(o) * p.in_dim;
        const double* row = p.w.data() + static_cast<std::size_t>(o) * p.in_dim;
        for (int i = 0; i < p.in_dim; ++i) {
            grow[i] += g * x[static_cast<std::size_t>(i)];
            if (dx) (*dx)[static_cast<std::size_t>(i)] += g * row[i];
        }
    }
}

void save_checkpoint(const std::string& path, const EncoderParams& params) {
    auto& mutable_params = const_cast<EncoderParams&>(params);
    auto tensors = parameter_tensors(mutable_params);
    auto names = parameter_names(params);

    nlohmann::json header;
    header["format"] = "cadre-checkpoint-v1";
    header["config"] = {
        {"input_size", params.config.input_size}, {"width", params.config.width},
        {"embed_dim", params.config.embed_dim}, {"num_classes", params.config.num_classes},
        {"pose_bins", params.config.pose_bins}};
    nlohmann::json tlist = nlohmann::json::array();
    for (std::size_t i = 0; i < tensors.size(); ++i)
        tlist.push_back({{"name", names[i]}, {"size", tensors[i]->size()}});
    header["tensors"] = tlist;
    const std::string htext = header.dump();

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    unsigned char lenbuf[4] = {
        static_cast<unsigned char>(hlen & 0xff), static_cast<unsigned char>((hlen >> 8) & 0xff),
        static_cast<unsigned char>((hlen >> 16) & 0xff),
        static_cast<unsigned char>((hlen >> 24) & 0xff)};
    bool ok = std::fwrite(lenbuf, 1, 4, f) == 4 &&
              std::fwrite(htext.data(), 1, htext.size(), f) == htext.size();
    for (const auto* t : tensors) {
        if (!ok) break;
        std::vector<float> row(t->size());
        for (std::size_t i = 0; i < t->size(); ++i) row[i] = static_cast<float>((*t)[i]);
        ok = std::fwrite(row.data(), sizeof(float), row.size(), f) == row.size();
    }
    std::fclose(f);
    if (!ok) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    unsigned char lenbuf[4];
    if (std::fread(lenbuf, 1, 4, f) != 4) {
        std::fclose(f);
        throw std::runtime_error("load_checkpoint: truncated header length");
    }
    const std::uint32_t hlen = static_cast<std::uint32_t>(lenbuf[0]) |
                               (static_cast<std::uint32_t>(lenbuf[1]) << 8) |
                               (static_cast<std::uint32_t>(lenbuf[2]) << 16) |
                               (static_cast<std::uint32_t>(lenbuf[3]) << 24);
    std::string htext(hlen, '\0');
    if (std::fread(htext.data(), 1, hlen, f) != hlen) {
        std::fclose(f);
        throw std::runtime_error("load_checkpoint: truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception&) {
        std::fclose(f);
        throw std::runtime_error("load_checkpoint: bad header JSON");
    }
    if (header.value("format", "") != "cadre-checkpoint-v1") {
        std::fclose(f);
        throw std::runtime_error("load_checkpoint: unknown format");
    }
    EncoderConfig cfg;
    const auto& jc = header.at("config");
    cfg.input_size = jc.at("input_size").get<int>();
    cfg.width = jc.at("width").get<int>();
    cfg.embed_dim = jc.at("embed_dim").get<int>();
    cfg.num_classes = jc.at("num_classes").get<int>();
    cfg.pose_bins = jc.at("pose_bins").get<int>();

    EncoderParams params = init_encoder(cfg, 0);
    auto tensors = parameter_tensors(params);
    auto names = parameter_names(params);
    const auto& tlist = header.at("tensors");
    if (tlist.size() != tensors.size()) {
        std::fclose(f);
        throw std::runtime_error("load_checkpoint: tensor list mismatch");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tlist[i].at("name").get<std::string>() != names[i] ||
            tlist[i].at("size").get<std::size_t>() != tensors[i]->size()) {
            std::fclose(f);
            throw std::runtime_error("load_checkpoint: tensor shape mismatch");
        }
        std::vector<float> row(tensors[i]->size());
        if (std::fread(row.data(), sizeof(float), row.size(), f) != row.size()) {
            std::fclose(f);
            throw std::runtime_error("load_checkpoint: truncated payload");
        }
        for (std::size_t j = 0; j < row.size(); ++j)
            (*tensors[i])[j] = static_cast<double>(row[j]);
    }
    std::fclose(f);
    return params;
}

} // namespace cadre
