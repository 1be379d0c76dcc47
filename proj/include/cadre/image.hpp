#pragma once

#include <string>
#include <vector>

#include "cadre/box.hpp"

namespace cadre {

// Row-major grayscale raster with values in [0, 1]. Pixel (x, y) covers the
// unit square [x, x+1) x [y, y+1); its center sits at (x+0.5, y+0.5).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

// Binary 8-bit PGM (P5), values quantized to round(v*255). Loading maps back
// to v/255, so save/load round-trips the quantized raster exactly.
void save_pgm(const std::string& path, const Image& img);
Image load_pgm(const std::string& path);

// Resample the ROI box (source pixel coordinates) to out_w x out_h.
// Bilinear with edge clamping for feature crops; nearest for binary masks.
Image crop_bilinear(const Image& src, const Box& roi, int out_w, int out_h);
Image crop_nearest(const Image& src, const Box& roi, int out_w, int out_h);

Image hflip(const Image& img);

// Zero out pixels whose mask value is below 0.5 (the M o F product with a
// binary mask). Sizes must agree.
Image apply_mask(const Image& features, const Image& mask);

// Scale all values by factor and clamp back into [0, 1].
Image adjust_brightness(const Image& img, double factor);

// Snap values to the 8-bit PGM grid (round(v*255)/255). Rasters quantized at
// creation survive a PGM save/load round trip bit-exactly.
void quantize_to_byte_grid(Image& img);

} // namespace cadre
