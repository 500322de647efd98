#include "evaluation/backbone.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace chromo::evaluation {

using nn::Var;

FeatureBackbone::FeatureBackbone(int backbone_id) : id_(backbone_id) {
    Rng rng(Rng::derive(0xFEA7BACCull + static_cast<uint64_t>(backbone_id), "feature-backbone"));
    int in_ch = 1;
    for (int s = 0; s < kStages; ++s) {
        conv_[static_cast<size_t>(s)] = nn::Conv2d<float>(
            reg_, "stage" + std::to_string(s), in_ch, kDims[static_cast<size_t>(s)], 3, 1, 1, rng);
        in_ch = kDims[static_cast<size_t>(s)];
    }
    reg_.set_requires_grad(false);  // frozen after construction
}

std::vector<Var<float>> FeatureBackbone::features(const Var<float>& x) const {
    if (x.val().rank() != 3 || x.val().dim(0) != 1)
        throw EvalError("FeatureBackbone: (1,H,W) input required");
    if (x.val().dim(1) % 8 != 0 || x.val().dim(2) % 8 != 0)
        throw EvalError("FeatureBackbone: spatial dims must be divisible by 8");
    std::vector<Var<float>> acts;
    acts.reserve(kStages);
    Var<float> h = x;
    for (int s = 0; s < kStages; ++s) {
        h = nn::relu(conv_[static_cast<size_t>(s)].forward(h));
        acts.push_back(h);
        if (s + 1 < kStages) h = nn::avg_pool2(h);
    }
    return acts;
}

std::vector<Tensor<float>> FeatureBackbone::features(const Image& im) const {
    nn::NoGradGuard ng;
    const auto acts = features(Var<float>::leaf(to_tensor(im), false));
    std::vector<Tensor<float>> out;
    out.reserve(acts.size());
    for (const auto& a : acts) out.push_back(a.val());
    return out;
}

Tensor<float> FeatureBackbone::embed(const Image& im) const {
    nn::NoGradGuard ng;
    const auto acts = features(Var<float>::leaf(to_tensor(im), false));
    return nn::global_avg_pool(acts.back()).val();
}

namespace {

// channel-unit-normalize a (C,H,W) activation at every spatial position
Tensor<float> unit_channels(const Tensor<float>& f) {
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    const int hw = h * w;
    Tensor<float> out(f.shape);
    for (int i = 0; i < hw; ++i) {
        double n2 = 0;
        for (int ch = 0; ch < c; ++ch) {
            const float v = f.data[static_cast<size_t>(ch) * hw + i];
            n2 += static_cast<double>(v) * v;
        }
        const float inv = static_cast<float>(1.0 / (std::sqrt(n2) + 1e-10));
        for (int ch = 0; ch < c; ++ch)
            out.data[static_cast<size_t>(ch) * hw + i] =
                f.data[static_cast<size_t>(ch) * hw + i] * inv;
    }
    return out;
}

}  // namespace

double perceptual_distance(const Image& a, const Image& b, const FeatureBackbone& backbone) {
    if (a.h != b.h || a.w != b.w) throw EvalError("perceptual_distance: shape mismatch");
    const auto fa = backbone.features(a);
    const auto fb = backbone.features(b);
    double total = 0;
    for (size_t s = 0; s < fa.size(); ++s) {
        const Tensor<float> na = unit_channels(fa[s]);
        const Tensor<float> nb = unit_channels(fb[s]);
        double acc = 0;
        for (size_t i = 0; i < na.data.size(); ++i) {
            const double d = static_cast<double>(na.data[i]) - nb.data[i];
            acc += d * d;
        }
        total += acc / static_cast<double>(na.data.size());
    }
    return total;
}

double lpips_pair_score(const Image& a, const Image& b) {
    static const FeatureBackbone bb_a(kBackboneA);
    static const FeatureBackbone bb_v(kBackboneV);
    return 0.5 * (perceptual_distance(a, b, bb_a) + perceptual_distance(a, b, bb_v));
}

}  // namespace chromo::evaluation
