#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/layers.hpp"
#include "motiongen/motion.hpp"

namespace chromo::motiongen {

struct MotionGenConfig {
    int image_size = 256;  // square input edge; must be divisible by 16
    int regions = 10;      // K, 1..32
    float eps = kCovEps;

    // Heatmaps, dense motion, and the warped bottleneck all live at 1/4 scale.
    int heat() const { return image_size / 4; }
    void validate() const;
};

// conv -> instance norm -> relu, the block both hourglasses are made of
struct ConvBlock {
    nn::Conv2d<float> conv;
    nn::InstanceNorm<float> norm;

    ConvBlock() = default;
    ConvBlock(nn::ParamRegistry<float>& reg, const std::string& name, int in_ch, int out_ch,
              Rng& rng)
        : conv(reg, name, in_ch, out_ch, 3, 1, 1, rng), norm(reg, name + ".in", out_ch) {}

    nn::Var<float> forward(const nn::Var<float>& x) const {
        return nn::relu(norm.forward(conv.forward(x)));
    }
};

// Self-learned region estimation: a small hourglass over the 1/4-scale image
// whose K head channels are spatially softmaxed into RegionHeatmaps.
class RegionPredictor {
public:
    RegionPredictor() = default;
    RegionPredictor(nn::ParamRegistry<float>& reg, const std::string& prefix, int regions,
                    Rng& rng);

    // x: (1, heat, heat); heat divisible by 4
    RegionHeatmaps forward(const nn::Var<float>& x) const;

private:
    ConvBlock e0_, e1_, mid_, d1_, d0_;
    nn::Conv2d<float> head_;
};

// Hourglass that turns candidate region/background flows into the composite
// MotionField: per-pixel confidence simplex over K+1 candidates plus the
// occlusion map that gates the warped features.
class DenseMotionNet {
public:
    DenseMotionNet() = default;
    DenseMotionNet(nn::ParamRegistry<float>& reg, const std::string& prefix, int regions,
                   Rng& rng);

    // src_small: (1, heat, heat) constant; heatmaps (K, heat, heat);
    // motions.size() == K; bg_affine (2,2) and bg_shift (2) parameterize the
    // background's backward map about the grid center.
    MotionField forward(const nn::Var<float>& src_small, const RegionHeatmaps& src_heat,
                        const RegionHeatmaps& drv_heat,
                        const std::vector<RegionMotion>& motions,
                        const nn::Var<float>& bg_affine, const nn::Var<float>& bg_shift) const;

private:
    int regions_ = 0;
    ConvBlock e0_, e1_, mid_, u1_, u0_;
    nn::Conv2d<float> head_;
};

// Background backward map (Z - c) B^T + c + t over the grid, in normalized
// coordinates. B = I, t = 0 reproduces the identity grid bitwise.
nn::Var<float> background_rows(const nn::Var<float>& bg_affine, const nn::Var<float>& bg_shift,
                               int hg, int wg);

// Pixelwise convex combination of candidate flow rows: candidates are
// (K+1) tensors of shape (N,2), confidence is (K+1,N) with unit columns.
nn::Var<float> compose_flow(const std::vector<nn::Var<float>>& candidate_rows,
                            const nn::Var<float>& confidence);

struct GeneratorOutput {
    nn::Var<float> image;  // (1, S, S) in [0,1]
    MotionField motion;
    RegionHeatmaps src_regions, drv_regions;
    // The prediction at scales 1, 1/2, 1/4, 1/8 (still on the tape); the
    // multi-resolution perceptual loss consumes these directly.
    std::vector<nn::Var<float>> pyramid;
};

// The motion transformation generator: region estimation on source and
// driving, per-region affine transport, dense-motion composition, and an
// encode-warp-decode image pathway. The driving image influences the output
// only through its motion representation.
class MotionGenerator {
public:
    MotionGenerator(const MotionGenConfig& cfg, std::uint64_t seed);

    const MotionGenConfig& config() const { return cfg_; }
    nn::ParamRegistry<float>& params() { return reg_; }
    const nn::ParamRegistry<float>& params() const { return reg_; }

    // K spatially normalized heatmaps of a full-resolution image.
    RegionHeatmaps estimate_regions(const Image& image) const;

    // Composite motion field from already-estimated heatmaps.
    MotionField dense_motion(const Image& source, const RegionHeatmaps& src_heat,
                             const RegionHeatmaps& drv_heat) const;

    GeneratorOutput generate(const Image& source, const Image& driving) const;

private:
    MotionGenConfig cfg_;
    nn::ParamRegistry<float> reg_;
    RegionPredictor rp_;
    DenseMotionNet dm_;
    nn::Var<float> bg_affine_, bg_shift_;
    ConvBlock enc1_, enc2_, enc3_, dec1_, dec2_;
    nn::Conv2d<float> out_;
};

}  // namespace chromo::motiongen
