#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "core/errors.hpp"
#include "doctest.h"
#include "morphometry/morphometry.hpp"
#include "synthdata/banding.hpp"

using namespace chromo;
using namespace chromo::morphometry;

namespace {

Image bar(int y0, int y1, int x0, int x1, float v = 1.f) {
    Image im(32, 32);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) im.at(y, x) = v;
    return im;
}

Image translate(const Image& im, int dy, int dx) {
    Image out(im.h, im.w);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            const int sy = y - dy, sx = x - dx;
            if (sy >= 0 && sy < im.h && sx >= 0 && sx < im.w) out.at(y, x) = im.at(sy, sx);
        }
    return out;
}

}  // namespace

TEST_CASE("binarize uses a strict threshold") {
    Image im(4, 4);
    CHECK(midpoint_scan(binarize(im, 0.04f)).empty());

    for (float& v : im.px) v = 0.04f;
    const BinaryMask eq = binarize(im, 0.04f);
    CHECK(std::count(eq.m.begin(), eq.m.end(), 1) == 0);

    for (float& v : im.px) v = 0.0401f;
    const BinaryMask gt = binarize(im, 0.04f);
    CHECK(std::count(gt.m.begin(), gt.m.end(), 1) == 16);

    const Image solid = bar(3, 9, 10, 12);
    const BinaryMask mask = binarize(solid, 0.04f);
    for (int y = 0; y < solid.h; ++y)
        for (int x = 0; x < solid.w; ++x) REQUIRE(mask.at(y, x) == (solid.at(y, x) > 0.04f));
}

TEST_CASE("midpoint_scan emits one midpoint per occupied row") {
    const Image im = bar(5, 7, 10, 12);
    const auto pts = midpoint_scan(binarize(im, 0.04f));
    REQUIRE(pts.size() == 3);
    CHECK(pts[0] == std::pair<int, double>(5, 11.0));
    CHECK(pts[1] == std::pair<int, double>(6, 11.0));
    CHECK(pts[2] == std::pair<int, double>(7, 11.0));

    // disconnected pixels in one row: midpoint of the min/max columns
    Image sparse(16, 16);
    sparse.at(4, 3) = 1.f;
    sparse.at(4, 9) = 1.f;
    const auto sp = midpoint_scan(binarize(sparse, 0.04f));
    REQUIRE(sp.size() == 1);
    CHECK(sp[0] == std::pair<int, double>(4, 6.0));
}

TEST_CASE("smooth_midpoints replicates edges and rejects even windows") {
    Midpoints pts = {{0, 0.0}, {1, 3.0}, {2, 0.0}};
    const auto sm = smooth_midpoints(pts, 3);
    REQUIRE(sm.size() == 3);
    CHECK(sm[0].second == doctest::Approx(1.0));
    CHECK(sm[1].second == doctest::Approx(1.0));
    CHECK(sm[2].second == doctest::Approx(1.0));
    for (size_t i = 0; i < sm.size(); ++i) CHECK(sm[i].first == pts[i].first);

    CHECK(smooth_midpoints(pts, 1) == pts);

    Midpoints c = {{0, 4.0}, {1, 4.0}, {2, 4.0}, {3, 4.0}};
    CHECK(smooth_midpoints(c, 3) == c);
    CHECK(smooth_midpoints(c, 5) == c);

    CHECK_THROWS_AS(smooth_midpoints(pts, 2), ConfigError);
    CHECK_THROWS_AS(smooth_midpoints(pts, 0), ConfigError);
    CHECK_THROWS_AS(smooth_midpoints(pts, -3), ConfigError);
}

TEST_CASE("measure on a solid bar is exact") {
    const Image im = bar(5, 7, 10, 13);
    const auto prof = measure(im);
    CHECK(prof.length == doctest::Approx(2.0));
    CHECK(prof.width == doctest::Approx(4.0));
    CHECK(prof.midpoints.size() == 3);
}

TEST_CASE("45-degree diagonal length approximates (n-1) sqrt 2") {
    const int n = 24;
    Image im(32, 32);
    for (int i = 0; i < n; ++i) im.at(4 + i, 3 + i) = 1.f;
    const auto prof = measure(im);
    const double expect = (n - 1) * std::sqrt(2.0);
    CHECK(std::abs(prof.length - expect) < 0.10 * expect);
    CHECK(prof.width == doctest::Approx(n));  // span of a diagonal
}

TEST_CASE("empty image measures zero") {
    const auto prof = measure(Image(32, 32));
    CHECK(prof.length == 0.0);
    CHECK(prof.width == 0.0);
    CHECK(prof.midpoints.empty());
    CHECK(prof.smoothed_midpoints.empty());
}

TEST_CASE("measure is translation invariant") {
    const Image im = synthdata::gen_straight(
        [] {
            synthdata::BandingProfile p;
            p.num_bands = 3;
            p.band_intensities = {0.9f, 0.6f, 1.0f};
            p.band_widths = {20, 20, 20};
            p.chromosome_length = 120;
            p.chromosome_width = 20;
            p.blur_sigma = 1.0f;
            return p;
        }(),
        5);
    const auto base = measure(im);
    for (auto [dy, dx] : {std::pair{9, 0}, {0, -7}, {12, 11}, {-5, 3}}) {
        const auto moved = measure(translate(im, dy, dx));
        CHECK(moved.length == base.length);  // exact, not approximate
        CHECK(moved.width == base.width);
    }
}

TEST_CASE("width mode: span versus occupied-column count") {
    Image im(16, 16);
    im.at(4, 2) = 1.f;
    im.at(5, 10) = 1.f;  // only two occupied columns, far apart
    CHECK(measure(im, 0.04f, 5, WidthMode::kSpan).width == doctest::Approx(9.0));
    CHECK(measure(im, 0.04f, 5, WidthMode::kCount).width == doctest::Approx(2.0));
}

TEST_CASE("row-wise mask growth never shrinks the width") {
    Image im(16, 16);
    double prev = 0;
    for (int x = 3; x < 13; ++x) {
        im.at(8, x) = 1.f;
        const double w = measure(im).width;
        CHECK(w >= prev);
        prev = w;
    }
}
