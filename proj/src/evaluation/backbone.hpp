#pragma once

#include <array>
#include <vector>

#include "core/image.hpp"
#include "core/layers.hpp"

namespace chromo::evaluation {

// Reserved backbone ids. 0 feeds the generator's perceptual loss; 1 and 2
// stand in for the LPIPS AlexNet/VGG backbones; 3 is the label-free FID
// feature fallback.
inline constexpr int kBackboneTrain = 0;
inline constexpr int kBackboneA = 1;
inline constexpr int kBackboneV = 2;
inline constexpr int kBackboneFid = 3;

// Small frozen convolutional feature extractor: four 3x3 conv stages with
// dims 16/32/64/64, ReLU, 2x mean-pool between stages. Weights are a pure
// function of backbone_id and never train; the pretrained backbones of the
// original metrics are replaced by these at desk scale.
class FeatureBackbone {
public:
    static constexpr int kStages = 4;
    static constexpr std::array<int, kStages> kDims = {16, 32, 64, 64};

    explicit FeatureBackbone(int backbone_id);

    int id() const { return id_; }

    // Post-ReLU activations of the four stages, at scales 1, 1/2, 1/4, 1/8 of
    // the input. Input (1,H,W) with H, W divisible by 8. Stays on the tape,
    // so the generator can backpropagate through it (weights still frozen).
    std::vector<nn::Var<float>> features(const nn::Var<float>& x) const;

    // No-grad convenience for metric evaluation.
    std::vector<Tensor<float>> features(const Image& im) const;

    // Channel-mean of the last stage: a 64-d image embedding.
    Tensor<float> embed(const Image& im) const;

private:
    int id_;
    nn::ParamRegistry<float> reg_;
    std::array<nn::Conv2d<float>, kStages> conv_;
};

// LPIPS-style distance under one backbone: per stage, channel vectors are
// unit-normalized at each position, then the mean squared difference is
// taken; stages are summed. Zero iff features are identical; symmetric.
double perceptual_distance(const Image& a, const Image& b, const FeatureBackbone& backbone);

// Mean of the distances under backbones A and V (the paper's two-backbone
// average). Backbones are constructed once and cached.
double lpips_pair_score(const Image& a, const Image& b);

}  // namespace chromo::evaluation
