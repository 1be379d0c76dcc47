#include "cadre/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cadre {

void save_pgm(const std::string& path, const Image& img) {
    if (img.width < 1 || img.height < 1)
        throw std::invalid_argument("save_pgm: empty image");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_pgm: cannot open " + path);
    std::fprintf(f, "P5\n%d %d\n255\n", img.width, img.height);
    std::vector<unsigned char> row(img.width);
    bool ok = true;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = std::clamp(img.at(x, y), 0.0, 1.0);
            row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        ok = ok && std::fwrite(row.data(), 1, row.size(), f) == row.size();
    }
    if (std::fclose(f) != 0 || !ok)
        throw std::runtime_error("save_pgm: write failed for " + path);
}

namespace {

int read_pgm_int(std::FILE* f, const std::string& path) {
    int c = std::fgetc(f);
    // skip whitespace and '#' comment lines
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = std::fgetc(f);
        c = std::fgetc(f);
    }
    if (c == EOF || !std::isdigit(c))
        throw std::runtime_error("load_pgm: malformed header in " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = std::fgetc(f);
    }
    return value;
}

} // namespace

Image load_pgm(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load_pgm: cannot open " + path);
    char magic[3] = {0, 0, 0};
    if (std::fread(magic, 1, 2, f) != 2 || magic[0] != 'P' || magic[1] != '5') {
        std::fclose(f);
        throw std::runtime_error("load_pgm: not a binary PGM: " + path);
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = read_pgm_int(f, path);
        h = read_pgm_int(f, path);
        maxval = read_pgm_int(f, path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    if (w < 1 || h < 1 || maxval != 255) {
        std::fclose(f);
        throw std::runtime_error("load_pgm: unsupported PGM geometry in " + path);
    }
    // The single whitespace byte after maxval was consumed by read_pgm_int.
    Image img(w, h);
    std::vector<unsigned char> row(w);
    for (int y = 0; y < h; ++y) {
        if (std::fread(row.data(), 1, row.size(), f) != row.size()) {
            std::fclose(f);
            throw std::runtime_error("load_pgm: truncated pixel data in " + path);
        }
        for (int x = 0; x < w; ++x) img.at(x, y) = row[x] / 255.0;
    }
    std::fclose(f);
    return img;
}

namespace {

void check_roi(const Box& roi, int out_w, int out_h, const char* who) {
    if (!(roi.width() > 0.0) || !(roi.height() > 0.0))
        throw std::domain_error(std::string(who) + ": degenerate ROI");
    if (out_w < 1 || out_h < 1)
        throw std::domain_error(std::string(who) + ": output size must be positive");
}

double sample_clamped(const Image& src, int x, int y) {
    x = std::clamp(x, 0, src.width - 1);
    y = std::clamp(y, 0, src.height - 1);
    return src.at(x, y);
}

} // namespace

Image crop_bilinear(const Image& src, const Box& roi, int out_w, int out_h) {
    check_roi(roi, out_w, out_h, "crop_bilinear");
    Image out(out_w, out_h);
    for (int j = 0; j < out_h; ++j) {
        for (int i = 0; i < out_w; ++i) {
            double u = roi.x0 + (i + 0.5) / out_w * roi.width();
            double v = roi.y0 + (j + 0.5) / out_h * roi.height();
            // to index space: sample between pixel centers
            double fx = u - 0.5, fy = v - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            int y0 = static_cast<int>(std::floor(fy));
            double ax = fx - x0, ay = fy - y0;
            double top = (1 - ax) * sample_clamped(src, x0, y0) + ax * sample_clamped(src, x0 + 1, y0);
            double bot = (1 - ax) * sample_clamped(src, x0, y0 + 1) + ax * sample_clamped(src, x0 + 1, y0 + 1);
            out.at(i, j) = (1 - ay) * top + ay * bot;
        }
    }
    return out;
}

Image crop_nearest(const Image& src, const Box& roi, int out_w, int out_h) {
    check_roi(roi, out_w, out_h, "crop_nearest");
    Image out(out_w, out_h);
    for (int j = 0; j < out_h; ++j) {
        for (int i = 0; i < out_w; ++i) {
            double u = roi.x0 + (i + 0.5) / out_w * roi.width();
            double v = roi.y0 + (j + 0.5) / out_h * roi.height();
            out.at(i, j) = sample_clamped(src, static_cast<int>(std::floor(u)),
                                          static_cast<int>(std::floor(v)));
        }
    }
    return out;
}

Image hflip(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(img.width - 1 - x, y);
    return out;
}

Image apply_mask(const Image& features, const Image& mask) {
    if (!features.same_size(mask)) throw std::domain_error("apply_mask: size mismatch");
    Image out = features;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        if (mask.pixels[i] < 0.5) out.pixels[i] = 0.0;
    return out;
}

Image adjust_brightness(const Image& img, double factor) {
    Image out = img;
    for (double& v : out.pixels) v = std::clamp(v * factor, 0.0, 1.0);
    return out;
}

void quantize_to_byte_grid(Image& img) {
    for (double& v : img.pixels)
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
}

} // namespace cadre
