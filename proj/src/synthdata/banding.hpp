#pragma once

#include <vector>

#include "core/image.hpp"
#include "core/rng.hpp"

namespace chromo::synthdata {

inline constexpr int kCanvas = 256;   // output field size (px)
inline constexpr int kMargin = 8;     // required free border around the body
inline constexpr float kBaseline = 0.3f;  // between-band stain level

// Geometry and banding of one straight chromosome.
struct BandingProfile {
    int num_bands = 1;
    std::vector<float> band_intensities;  // one per band, in [0,1]
    std::vector<int> band_widths;         // axial extent per band (px)
    int chromosome_length = 160;
    int chromosome_width = 30;
    float blur_sigma = 0.f;
};

// Throws ConfigError when any profile invariant is violated.
void validate_profile(const BandingProfile& p);

// The 1-D axial intensity template before blurring: baseline kBaseline with
// the band plateaus laid out at evenly spaced gaps. Exposed separately so the
// band-count contract (one intensity maximum per band) can be checked against
// the pre-blur signal.
std::vector<float> band_template(const BandingProfile& p);

// A straight chromosome as a continuous field: separable axial profile times
// lateral mask, anchored in the canvas center. Both the straight renderer and
// the bend renderer sample this same field, so their disagreement after
// warping measures only interpolation error.
struct StraightField {
    int y0 = 0;                // first axial row of the body
    int length = 0;            // axial rows
    float xa = 0.f, xb = 0.f;  // inclusive plateau column span of the mask
    float ramp = 1.f;          // lateral edge ramp width (px)
    std::vector<float> axial;  // post-blur axial profile, length entries

    // Intensity at continuous image coordinates (row y, column x).
    float value(float y, float x) const;
    float lateral_mask(float x) const;
    float axial_profile(float y) const;
};

// Builds the continuous field for a profile; the seed drives the per-row
// stain jitter (only applied when blur_sigma > 0, keeping the crisp
// degenerate profiles exactly reproducible from the profile alone).
StraightField make_field(const BandingProfile& p, uint64_t seed);

// Renders the field onto the 256x256 integer grid. Background is exactly 0.
Image gen_straight(const BandingProfile& p, uint64_t seed);

}  // namespace chromo::synthdata
