#include "synthdata/banding.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace chromo::synthdata {

void validate_profile(const BandingProfile& p) {
    if (p.num_bands < 1) throw ConfigError("banding profile needs num_bands >= 1");
    if (static_cast<int>(p.band_intensities.size()) != p.num_bands ||
        static_cast<int>(p.band_widths.size()) != p.num_bands)
        throw ConfigError("banding profile: per-band lists must have num_bands entries");
    for (float v : p.band_intensities)
        if (v < 0.f || v > 1.f) throw ConfigError("band intensity outside [0,1]");
    int total = 0;
    for (int w : p.band_widths) {
        if (w < 1) throw ConfigError("band width must be >= 1 px");
        total += w;
    }
    if (total > p.chromosome_length)
        throw ConfigError("band widths exceed chromosome length");
    if (p.chromosome_length < 8 || p.chromosome_width < 4)
        throw ConfigError("chromosome body too small");
    if (p.chromosome_length > kCanvas - 2 * kMargin ||
        p.chromosome_width > kCanvas - 2 * kMargin)
        throw ConfigError("chromosome body must fit in 256x256 with an 8 px margin");
    if (p.blur_sigma < 0.f) throw ConfigError("blur_sigma must be >= 0");
}

std::vector<float> band_template(const BandingProfile& p) {
    validate_profile(p);
    const int L = p.chromosome_length;
    std::vector<float> t(static_cast<size_t>(L), kBaseline);
    int total = 0;
    for (int w : p.band_widths) total += w;
    // even gaps before, between and after the bands
    const double gap = static_cast<double>(L - total) / (p.num_bands + 1);
    double cursor = gap;
    for (int b = 0; b < p.num_bands; ++b) {
        const int start = static_cast<int>(std::lround(cursor));
        const int end = std::min(L, start + p.band_widths[static_cast<size_t>(b)]);
        for (int i = start; i < end; ++i)
            t[static_cast<size_t>(i)] = p.band_intensities[static_cast<size_t>(b)];
        cursor += p.band_widths[static_cast<size_t>(b)] + gap;
    }
    return t;
}

namespace {

std::vector<float> gaussian_blur_1d(const std::vector<float>& in, float sigma) {
    if (sigma <= 0.f) return in;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.f * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    float sum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        const float v = std::exp(-0.5f * static_cast<float>(i) * static_cast<float>(i) /
                                 (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;
    const int n = static_cast<int>(in.size());
    std::vector<float> out(in.size(), 0.f);
    for (int i = 0; i < n; ++i) {
        float acc = 0.f;
        for (int k = -radius; k <= radius; ++k) {
            int j = i + k;
            // reflect inside the template so blur never dims the body ends
            if (j < 0) j = -j - 1;
            if (j >= n) j = 2 * n - 1 - j;
            acc += in[static_cast<size_t>(j)] * kernel[static_cast<size_t>(k + radius)];
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

}  // namespace

float StraightField::lateral_mask(float x) const {
    const float d = std::max({xa - x, x - xb, 0.f});
    return std::max(0.f, 1.f - d / ramp);
}

float StraightField::axial_profile(float y) const {
    // linear interpolation over row centers, fading to 0 one row beyond the ends
    const float t = y - static_cast<float>(y0);
    if (t <= -1.f || t >= static_cast<float>(length)) return 0.f;
    if (t < 0.f) return (1.f + t) * axial.front();
    if (t > static_cast<float>(length - 1))
        return (static_cast<float>(length) - t) * axial.back();
    const int i = static_cast<int>(t);
    const int j = std::min(i + 1, length - 1);
    const float f = t - static_cast<float>(i);
    return (1.f - f) * axial[static_cast<size_t>(i)] + f * axial[static_cast<size_t>(j)];
}

float StraightField::value(float y, float x) const { return axial_profile(y) * lateral_mask(x); }

StraightField make_field(const BandingProfile& p, uint64_t seed) {
    std::vector<float> axial = band_template(p);
    if (p.blur_sigma > 0.f) {
        // per-row stain jitter, then blur; clamped well above the binarization
        // threshold so the body never drops out of the mask
        Rng noise = Rng(seed).child("axial-stain");
        for (auto& v : axial) {
            v += static_cast<float>(noise.normal()) * 0.02f;
            v = std::min(1.f, std::max(0.1f, v));
        }
        axial = gaussian_blur_1d(axial, p.blur_sigma);
    }
    StraightField f;
    f.length = p.chromosome_length;
    f.y0 = (kCanvas - p.chromosome_length) / 2;
    const int x0 = (kCanvas - p.chromosome_width) / 2;
    f.xa = static_cast<float>(x0);
    f.xb = static_cast<float>(x0 + p.chromosome_width - 1);
    f.ramp = std::max(1.f, std::min(p.blur_sigma, 2.f));
    f.axial = std::move(axial);
    return f;
}

Image gen_straight(const BandingProfile& p, uint64_t seed) {
    const StraightField f = make_field(p, seed);
    Image im(kCanvas, kCanvas);
    for (int y = 0; y < kCanvas; ++y)
        for (int x = 0; x < kCanvas; ++x)
            im.at(y, x) = f.value(static_cast<float>(y), static_cast<float>(x));
    return im;
}

}  // namespace chromo::synthdata
