#pragma once

#include <vector>

#include "core/ops.hpp"

namespace chromo::motiongen {

// Default covariance regularizer: keeps point-mass regions invertible.
inline constexpr float kCovEps = 1e-4f;

// K per-region spatial distributions over the heatmap grid; each map sums
// to 1 (spatial softmax), all entries positive.
struct RegionHeatmaps {
    nn::Var<float> maps;  // (K, H', W')
    int count() const { return maps.val().dim(0); }
};

struct RegionMoments {
    nn::Var<float> mean;  // (2) heatmap-pixel coordinates, (x, y)
    nn::Var<float> cov;   // (2,2) symmetric, eigenvalues >= eps
};

// Per-region motion between a source and a driving heatmap: the PCA-style
// whitening transport drv_cov^{1/2} src_cov^{-1/2}, its exact inverse for
// the backward flow, and the mean translation.
struct RegionMotion {
    RegionMoments src, drv;
    nn::Var<float> affine;       // (2,2) A, maps source offsets to driving offsets
    nn::Var<float> translation;  // (2)   drv_mean - A src_mean
    nn::Var<float> affine_inv;   // (2,2) A^{-1} = src_cov^{1/2} drv_cov^{-1/2}
};

// Composite backward motion at the feature grid: absolute normalized
// sampling coordinates plus the pixelwise convex weights that blended the
// candidates. Confidence channel 0 is the background, 1..K the regions.
struct MotionField {
    nn::Var<float> flow;        // (H', W', 2) in [-1,1], half-pixel convention
    nn::Var<float> confidence;  // (K+1, H', W'), pixelwise simplex
    nn::Var<float> occlusion;   // (1, H', W') in (0,1), modulates warped features
};

// Region k of the stack as an (H',W') map, still on the tape.
nn::Var<float> heatmap_channel(const RegionHeatmaps& h, int k);

// mean = sum_p p h(p); cov = sum_p h(p) (p - mean)(p - mean)^T + eps I,
// evaluated via the expanded second-moment identity. An all-zero map falls
// back to the uniform distribution before the moments are taken.
RegionMoments region_moments(const nn::Var<float>& heatmap, float eps = kCovEps);

// Closed-form 2x2 SPD square root on the tape: sqrt(M) = (M + sqrt(det) I) /
// sqrt(tr + 2 sqrt(det)). Inputs with non-finite or non-positive-definite
// values -> NumericError.
nn::Var<float> sqrtm2x2(const nn::Var<float>& m);
nn::Var<float> invsqrtm2x2(const nn::Var<float>& m);

RegionMotion region_affine(const RegionMoments& src, const RegionMoments& drv);

// Backward flow rows of one region over an hg x wg grid, in heatmap pixels:
// row(z) = A^{-1}(z - drv_mean) + src_mean for every grid point z.
nn::Var<float> region_flow_rows(const RegionMotion& motion, int hg, int wg);

// (N,2) heatmap-pixel coordinate rows (x, y), row-major over the grid.
Tensor<float> grid_rows(int hg, int wg);

// Identity sampling grid in normalized coordinates (exact under the
// half-pixel convention), as (N,2) rows.
Tensor<float> identity_flow_rows(int hg, int wg);

// px -> normalized: g = (2 p + 1)/size - 1, on the tape.
nn::Var<float> rows_to_normalized(const nn::Var<float>& rows_px, int hg, int wg);

// Bilinear warp of a (C,H,W) grid at absolute normalized coordinates
// (H2,W2,2); out-of-bounds taps read 0; differentiable in both arguments.
nn::Var<float> warp(const nn::Var<float>& grid_vals, const nn::Var<float>& flow);

}  // namespace chromo::motiongen
