#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "core/image.hpp"
#include "core/layers.hpp"

namespace chromo::evaluation {

// Downstream-classification hyperparameters (initial lr, plateau decay and
// early stopping per the protocol the paper states for its classifiers).
struct DcaConfig {
    int k_folds = 4;
    int max_epochs = 80;
    double lr = 4e-5;
    double plateau_factor = 0.1;
    int plateau_patience = 5;
    int early_stop_patience = 20;
    int input_size = 128;
    uint64_t seed = 77;
};

// Small CNN type classifier: the FeatureBackbone stage layout (16/32/64/64)
// plus global average pooling and a zero-initialized linear head. Its GAP
// layer doubles as the FID feature extractor at desk scale.
class TypeClassifier {
public:
    TypeClassifier(int num_classes, uint64_t seed);

    // (1,s,s) input with s divisible by 16 -> (C) logits; stays on the tape
    nn::Var<float> logits(const nn::Var<float>& x) const;

    int predict(const Tensor<float>& input) const;
    Tensor<float> penultimate(const Tensor<float>& input) const;  // 64-d GAP features

    nn::ParamRegistry<float>& params() { return reg_; }
    const nn::ParamRegistry<float>& params() const { return reg_; }
    int num_classes() const { return classes_; }

private:
    int classes_;
    nn::ParamRegistry<float> reg_;
    std::array<nn::Conv2d<float>, 4> conv_;
    nn::Linear<float> head_;
};

// image -> (1,size,size) training tensor (2x mean-pool chain when the ratio
// is a power of two, bilinear otherwise)
Tensor<float> dca_input(const Image& im, int size);

// Stratified fold ids: within each class, samples cycle through folds in
// index order, so every sample lands in exactly one validation fold. A class
// with fewer than k_folds samples -> ConfigError.
std::vector<int> fold_assignment(const std::vector<int>& labels, int k_folds);

// Fixed-epoch training on a subset (no validation machinery); used for the
// FID feature extractor. Deterministic in (seed, inputs, order of train_idx).
TypeClassifier train_type_classifier(const std::vector<Tensor<float>>& inputs,
                                     const std::vector<int>& labels,
                                     const std::vector<int>& train_idx, int num_classes,
                                     int epochs, double lr, uint64_t seed);

// k-fold mean of the best validation accuracy per fold.
double downstream_accuracy(const std::vector<Image>& images, const std::vector<int>& labels,
                           const DcaConfig& cfg = {});

}  // namespace chromo::evaluation
