#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/image.hpp"

namespace chromo::morphometry {

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> m;

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), m(static_cast<size_t>(h_) * w_, 0) {}

    uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return m[static_cast<size_t>(y) * w + x]; }
};

// one entry per row containing foreground, sorted by row
using Midpoints = std::vector<std::pair<int, double>>;  // (row, mid_col)

struct MorphometryProfile {
    Midpoints midpoints;
    Midpoints smoothed_midpoints;
    double length = 0;  // arc length of the smoothed midpoint polyline (px)
    double width = 0;   // lateral extent (px)
};

// The paper's width wording is ambiguous between the column span and the
// number of occupied columns; span is the default, count stays available
// for comparison.
enum class WidthMode { kSpan, kCount };

inline constexpr float kDefaultTau = 0.04f;  // ~10/255, above PNG quantization noise
inline constexpr int kDefaultWindow = 5;

// mask[p] = 1 iff image[p] > tau (strictly)
BinaryMask binarize(const Image& im, float tau);

// (row, (min_col + max_col) / 2) for each row with foreground
Midpoints midpoint_scan(const BinaryMask& mask);

// centered moving average over mid_col with edge replication; rows unchanged.
// window must be odd and >= 1, otherwise ConfigError.
Midpoints smooth_midpoints(const Midpoints& pts, int window);

// sum of Euclidean distances between consecutive points
double polyline_length(const Midpoints& pts);

// binarize -> midpoint_scan -> smooth -> arc length; width over the whole mask
MorphometryProfile measure(const Image& im, float tau = kDefaultTau,
                           int window = kDefaultWindow, WidthMode mode = WidthMode::kSpan);

}  // namespace chromo::morphometry
