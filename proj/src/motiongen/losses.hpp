#pragma once

#include <vector>

#include "core/image.hpp"
#include "core/rng.hpp"
#include "evaluation/backbone.hpp"
#include "motiongen/generator.hpp"

namespace chromo::motiongen {

// Similarity transform about the image center: rotate by angle (radians),
// scale isotropically, then translate by (tx, ty) pixels.
struct SpatialTransform {
    float angle = 0.f;
    float scale = 1.f;
    float tx = 0.f;
    float ty = 0.f;

    bool is_identity() const {
        return angle == 0.f && scale == 1.f && tx == 0.f && ty == 0.f;
    }
};

// Random transform for the equivariance loss: rotation within +-15 degrees,
// scale in [0.9, 1.1], translation within +-10 px.
SpatialTransform sample_transform(Rng& rng);

// T(image) by backward bilinear sampling (zero fill outside). The exact
// identity transform returns the input unchanged, bit for bit.
Image apply_transform(const Image& im, const SpatialTransform& t);

// Multi-resolution perceptual loss: L1 between frozen-backbone activations
// of prediction and target at scales 1, 1/2, ..., 1/2^(levels-1), summed
// over scales and backbone stages. Zero iff all activations coincide.
nn::Var<float> perceptual_loss(const std::vector<nn::Var<float>>& pred_pyramid,
                               const nn::Var<float>& target,
                               const evaluation::FeatureBackbone& backbone);
nn::Var<float> perceptual_loss(const nn::Var<float>& pred, const nn::Var<float>& target,
                               const evaluation::FeatureBackbone& backbone, int levels = 4);

struct EquivarianceParts {
    nn::Var<float> mean_term;  // sum_k ||mu(T img)_k - (L mu_k + b)||_2
    nn::Var<float> cov_term;   // sum_k ||cov(T img)_k - L cov_k L^T||_F
    nn::Var<float> total;
};

// Region-moment equivariance under a sampled spatial transform, evaluated in
// heatmap coordinates. Exactly zero for the identity transform.
EquivarianceParts equivariance_loss(const MotionGenerator& gen, const Image& image,
                                    const SpatialTransform& t);

}  // namespace chromo::motiongen
