#pragma once

#include <string>
#include <vector>

namespace chromo {

// Dense backward flow in pixel units on the output grid: for output pixel
// (y, x) the sample location in the input is (y + dy, x + dx). Stored
// interleaved (dx, dy) per pixel, matching the (x, y) channel order of the
// normalized warp grids.
struct Flow {
    int h = 0, w = 0;
    std::vector<float> v;  // 2 floats per pixel: dx, dy

    Flow() = default;
    Flow(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_ * 2, 0.f) {}

    float& dx(int y, int x) { return v[(static_cast<size_t>(y) * w + x) * 2]; }
    float& dy(int y, int x) { return v[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
    float dx(int y, int x) const { return v[(static_cast<size_t>(y) * w + x) * 2]; }
    float dy(int y, int x) const { return v[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
};

// On-disk layout (little-endian): magic "GTFL", int32 H, int32 W, then
// H*W*2 float32 (dx, dy per pixel, row-major).
void save_flow(const std::string& path, const Flow& f);
Flow load_flow(const std::string& path);

}  // namespace chromo
