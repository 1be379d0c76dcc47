#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cadre/image.hpp"

namespace cadre {

// Two small convolutional encoders (image regions and rendered views,
// symmetric shapes, weights not shared) plus linear heads on the image
// stream's final conv feature map. The embedding projection reads the
// spatially pooled vector; the pose and center heads read the flattened
// pre-pool map, which keeps the spatial layout they need for orientation
// while the pooled embedding is free to become view-invariant. Everything
// is double precision with exact reverse-mode gradients, so the whole loss
// is finite-difference checkable.

struct EncoderConfig {
    int input_size = 32;  // square single-channel inputs
    int width = 16;       // channels per conv layer
    int embed_dim = 128;
    int num_classes = 1;
    int pose_bins = 16;
};

struct ConvParams {
    int in_c = 0, out_c = 0;
    std::vector<double> w;  // [out_c][in_c][3][3]
    std::vector<double> b;  // [out_c]
};

struct LinearParams {
    int in_dim = 0, out_dim = 0;
    std::vector<double> w;  // row-major [out_dim][in_dim]
    std::vector<double> b;  // [out_dim]
};

// 3x (3x3 conv, stride 2, pad 1, leaky ReLU), global average pool,
// projection. 32 -> 16 -> 8 -> 4 spatially; pooled feature has `width`
// channels.
struct StreamParams {
    ConvParams c1, c2, c3;
    LinearParams proj;  // width -> embed_dim
};

struct HeadParams {
    LinearParams pose_class;  // head_input_dim -> num_classes * pose_bins
    LinearParams pose_reg;    // head_input_dim -> num_classes * 4
    LinearParams center;      // head_input_dim -> num_classes * 2
};

struct EncoderParams {
    EncoderConfig config;
    StreamParams image_stream;
    StreamParams view_stream;
    HeadParams heads;
};

// Flattened size of the final conv map (width x s x s after three stride-2
// convs); the input dimension of every head.
int head_input_dim(const EncoderConfig& config);

// He-initialized weights, zero biases — except pose_reg, whose per-class bias
// starts at (0.95, 0, 0, 0) so an untrained decode lands on the bin medoid.
EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Zero-filled parameter set with the same shapes; used as the gradient buffer.
EncoderParams zero_like(const EncoderParams& params);

// Pointers to every parameter tensor in a fixed order (for SGD, checkpoint
// serialization, and finite-difference sweeps). Order: image stream, view
// stream, heads.
std::vector<std::vector<double>*> parameter_tensors(EncoderParams& params);
std::vector<std::string> parameter_names(const EncoderParams& params);

struct StreamCache {
    std::vector<double> x0;          // normalized input
    std::vector<double> z1, a1, z2, a2, z3, a3;
    std::vector<double> pooled;      // [width]
};

// Forward pass of one stream. Inputs are [0,1] rasters; the stream sees
// (v - 0.5) / 0.5. NaN input is a domain error. Returns the embedding
// (not normalized); fills cache when given one.
std::vector<double> stream_forward(const StreamParams& p, const EncoderConfig& cfg,
                                   const Image& input, StreamCache* cache);

// Reverse mode for one stream. d_embed is dL/d(embedding); d_pooled_extra
// (may be empty) is any gradient entering the pooled feature directly;
// d_spatial_extra (may be empty) is any gradient entering the flattened
// final conv map directly, e.g. from the heads. Parameter gradients
// accumulate into grads.
void stream_backward(const StreamParams& p, const EncoderConfig& cfg,
                     const StreamCache& cache, const std::vector<double>& d_embed,
                     const std::vector<double>& d_pooled_extra, StreamParams& grads,
                     const std::vector<double>& d_spatial_extra = {});

std::vector<double> linear_forward(const LinearParams& p, const std::vector<double>& x);
void linear_backward(const LinearParams& p, const std::vector<double>& x,
                     const std::vector<double>& dy, LinearParams& grads,
                     std::vector<double>* dx);

// Versioned binary checkpoint: uint32 little-endian header length, JSON
// header (format, config, tensor names/sizes), float32 payload.
void save_checkpoint(const std::string& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::string& path);

} // namespace cadre
