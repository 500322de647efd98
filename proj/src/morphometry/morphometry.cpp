#include "morphometry/morphometry.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace chromo::morphometry {

BinaryMask binarize(const Image& im, float tau) {
    BinaryMask mask(im.h, im.w);
    for (size_t i = 0; i < im.px.size(); ++i) mask.m[i] = im.px[i] > tau ? 1 : 0;
    return mask;
}

Midpoints midpoint_scan(const BinaryMask& mask) {
    Midpoints pts;
    for (int y = 0; y < mask.h; ++y) {
        int lo = -1, hi = -1;
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) {
                if (lo < 0) lo = x;
                hi = x;
            }
        if (lo >= 0) pts.emplace_back(y, 0.5 * (lo + hi));
    }
    return pts;
}

Midpoints smooth_midpoints(const Midpoints& pts, int window) {
    if (window < 1 || window % 2 == 0)
        throw ConfigError("smooth_midpoints: window must be odd and >= 1, got " +
                          std::to_string(window));
    const int n = static_cast<int>(pts.size());
    Midpoints out = pts;
    const int r = window / 2;
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = i - r; j <= i + r; ++j) {
            const int k = std::clamp(j, 0, n - 1);  // replication padding
            s += pts[static_cast<size_t>(k)].second;
        }
        out[static_cast<size_t>(i)].second = s / window;
    }
    return out;
}

double polyline_length(const Midpoints& pts) {
    double len = 0;
    for (size_t i = 1; i < pts.size(); ++i) {
        const double dy = pts[i].first - pts[i - 1].first;
        const double dx = pts[i].second - pts[i - 1].second;
        len += std::sqrt(dx * dx + dy * dy);
    }
    return len;
}

MorphometryProfile measure(const Image& im, float tau, int window, WidthMode mode) {
    const BinaryMask mask = binarize(im, tau);
    MorphometryProfile prof;
    prof.midpoints = midpoint_scan(mask);
    prof.smoothed_midpoints = smooth_midpoints(prof.midpoints, window);
    prof.length = polyline_length(prof.smoothed_midpoints);

    int lo = mask.w, hi = -1;
    std::vector<uint8_t> col_used(static_cast<size_t>(mask.w), 0);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                col_used[static_cast<size_t>(x)] = 1;
            }
    if (hi < 0) {
        prof.width = 0;
    } else if (mode == WidthMode::kSpan) {
        prof.width = hi - lo + 1;
    } else {
        int n = 0;
        for (uint8_t u : col_used) n += u;
        prof.width = n;
    }
    return prof;
}

}  // namespace chromo::morphometry
