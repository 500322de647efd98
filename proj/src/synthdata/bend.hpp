#pragma once

#include <utility>
#include <vector>

#include "core/gtfl.hpp"
#include "core/image.hpp"

namespace chromo::synthdata {

// Lateral bend described by offsets (px) at evenly spaced axial stations over
// the full image height, interpolated linearly (order 1) or by a natural
// cubic spline (order 3).
struct BendSpec {
    std::vector<float> control_offsets;
    int interpolation = 3;
};

// Bends a straight, zero-background chromosome image along an arc-length
// parameterized spine anchored at the body center. Returns the bent image and
// the dense backward flow on the straight grid: for straight pixel p, the
// matching bent-image position is p + (dx, dy).
//
// Throws ConfigError when the spec is malformed or the bent medial axis
// leaves the image, DegenerateBendError when the bend would self-overlap
// (Jacobian <= 0 on the body mask).
std::pair<Image, Flow> bend(const Image& straight, const BendSpec& spec);

}  // namespace chromo::synthdata
