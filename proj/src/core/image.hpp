#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace chromo {

// Single-channel float image, values nominally in [0,1], row-major.
struct Image {
    int h = 0, w = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, float fill = 0.f)
        : h(h_), w(w_), px(static_cast<size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    float at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
};

// 2x2 mean pooling; spatial dims must be even.
Image downsample2(const Image& im);

// Repeated downsample2 until the image is (oh, ow); requires exact power-of-2
// ratio on both axes.
Image downsample_to(const Image& im, int oh, int ow);

// Bilinear resize with align_corners semantics (corner pixels map to corners).
Image resize_bilinear(const Image& im, int oh, int ow);

inline Tensor<float> to_tensor(const Image& im) {
    Tensor<float> t({1, im.h, im.w});
    t.data = im.px;
    return t;
}

inline Image from_tensor(const Tensor<float>& t) {
    Image im(t.dim(t.rank() - 2), t.dim(t.rank() - 1));
    im.px = t.data;
    return im;
}

}  // namespace chromo
