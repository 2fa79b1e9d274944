#pragma once

#include <random>
#include <string>
#include <vector>

#include "fourcrop/tensor.hpp"

namespace fourcrop::img {

// 8-bit packed RGB as it comes out of the decoders
struct RawImage {
    std::size_t h = 0, w = 0;
    std::vector<unsigned char> rgb; // h*w*3
};

// PNG, JPEG or uncompressed BMP, sniffed by magic bytes; grayscale and
// palette inputs are promoted to RGB, alpha is dropped
RawImage decode_image(const std::string& path);
void write_png(const std::string& path, const RawImage& image);

Tensor<float> to_float(const RawImage& image); // (H,W,3), values/255

// Separable bilinear resize with the corner-anchored mapping
// src = dst*(src_n-1)/(dst_n-1); equal sizes copy exactly, constants resize
// to themselves exactly.
Tensor<float> resize_bilinear(const Tensor<float>& src, std::size_t out_h, std::size_t out_w);

Tensor<float> load_image(const std::string& path, std::size_t target = 224);

// Rotation about the image center by inverse mapping with bilinear sampling;
// samples outside the source read as zero.
Tensor<float> rotate_bilinear(const Tensor<float>& src, double degrees);

Tensor<float> flip_horizontal(const Tensor<float>& src);
Tensor<float> flip_vertical(const Tensor<float>& src);
void scale_brightness(Tensor<float>& image, float factor); // clamps to [0,1]

struct AugmentConfig {
    double rotation_degrees = 15.0;   // uniform in +-this
    double horizontal_flip_prob = 0.5;
    double vertical_flip_prob = 0.5;
    double brightness_delta = 0.2;    // multiplier uniform in [1-d, 1+d]
};

// Applies rotation, horizontal flip, vertical flip, brightness, in that
// order. Always consumes the same number of rng draws so sample streams stay
// aligned; an all-zero config is the exact identity.
Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& cfg, std::mt19937_64& rng);

} // namespace fourcrop::img
