#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mffa/common.hpp"
#include "mffa/tensor.hpp"

namespace mffa {

// 8-bit RGB frame, row-major, interleaved channels.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> rgb;  // h*w*3

    static Image filled(int h, int w, uint8_t r, uint8_t g, uint8_t b);
    uint8_t* px(int y, int x) { return rgb.data() + (static_cast<size_t>(y) * w + x) * 3; }
    const uint8_t* px(int y, int x) const { return rgb.data() + (static_cast<size_t>(y) * w + x) * 3; }
};

// Binary mask; 1 = instrument, 0 = background.
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> v;  // h*w, values in {0,1}

    static Mask zeros(int h, int w);
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    int64_t count() const;
    bool empty_mask() const { return count() == 0; }
};

// Binary PPM (P6, maxval 255) frames.
Image load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image& img);

// Binary PGM (P5, maxval 255) masks; only pixel values 0 and 255 are valid.
Mask load_pgm(const std::string& path);
void save_pgm(const std::string& path, const Mask& mask);

// Frame <-> tensor conversion. Images map to [0,1] HxWx3 tensors.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Mask as an HxWx1 {0,1} tensor (constant, never differentiated).
Tensor mask_to_tensor(const Mask& m);

// One-hot HxWx2 map; channel 0 = instrument, channel 1 = background.
Tensor mask_to_onehot(const Mask& m);

}  // namespace mffa
