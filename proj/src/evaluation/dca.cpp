#include "evaluation/dca.hpp"

#include <algorithm>
#include <cmath>

#include "core/adam.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"

namespace chromo::evaluation {

using nn::Var;

namespace {
constexpr std::array<int, 4> kDims = {16, 32, 64, 64};
}

TypeClassifier::TypeClassifier(int num_classes, uint64_t seed) : classes_(num_classes) {
    if (num_classes < 1) throw ConfigError("TypeClassifier: need at least one class");
    Rng rng(Rng::derive(seed, "type-classifier"));
    int in_ch = 1;
    for (int s = 0; s < 4; ++s) {
        conv_[static_cast<size_t>(s)] = nn::Conv2d<float>(
            reg_, "clf.stage" + std::to_string(s), in_ch, kDims[static_cast<size_t>(s)], 3, 1, 1,
            rng);
        in_ch = kDims[static_cast<size_t>(s)];
    }
    // zero-initialized head: the untrained classifier is exactly uninformative
    head_ = nn::Linear<float>(reg_, "clf.head", in_ch, num_classes, rng, 0.0);
}

Var<float> TypeClassifier::logits(const Var<float>& x) const {
    if (x.val().rank() != 3 || x.val().dim(0) != 1)
        throw EvalError("TypeClassifier: (1,s,s) input required");
    Var<float> h = x;
    for (int s = 0; s < 4; ++s) {
        h = nn::relu(conv_[static_cast<size_t>(s)].forward(h));
        h = nn::avg_pool2(h);
    }
    Var<float> pooled = nn::reshape(nn::global_avg_pool(h), {1, kDims[3]});
    return nn::reshape(head_.forward(pooled), {classes_});
}

int TypeClassifier::predict(const Tensor<float>& input) const {
    nn::NoGradGuard ng;
    const Tensor<float> z = logits(Var<float>::leaf(input, false)).val();
    int best = 0;
    for (int c = 1; c < classes_; ++c)
        if (z.data[static_cast<size_t>(c)] > z.data[static_cast<size_t>(best)]) best = c;
    return best;
}

Tensor<float> TypeClassifier::penultimate(const Tensor<float>& input) const {
    nn::NoGradGuard ng;
    Var<float> h = Var<float>::leaf(input, false);
    for (int s = 0; s < 4; ++s) {
        h = nn::relu(conv_[static_cast<size_t>(s)].forward(h));
        h = nn::avg_pool2(h);
    }
    return nn::global_avg_pool(h).val();
}

Tensor<float> dca_input(const Image& im, int size) {
    if (im.h == size && im.w == size) return to_tensor(im);
    const auto pow2_ratio = [](int a, int b) {
        if (a < b || a % b != 0) return false;
        int r = a / b;
        return (r & (r - 1)) == 0;
    };
    if (pow2_ratio(im.h, size) && pow2_ratio(im.w, size) && im.h == im.w)
        return to_tensor(downsample_to(im, size, size));
    return to_tensor(resize_bilinear(im, size, size));
}

std::vector<int> fold_assignment(const std::vector<int>& labels, int k_folds) {
    if (k_folds < 2) throw ConfigError("fold_assignment: k_folds must be >= 2");
    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw ConfigError("fold_assignment: negative label");
        max_label = std::max(max_label, l);
    }
    std::vector<int> counts(static_cast<size_t>(max_label + 1), 0);
    std::vector<int> folds(labels.size(), -1);
    std::vector<int> seen(static_cast<size_t>(max_label + 1), 0);
    for (int l : labels) ++counts[static_cast<size_t>(l)];
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0 && counts[c] < k_folds)
            throw ConfigError("fold_assignment: class " + std::to_string(c) + " has " +
                              std::to_string(counts[c]) + " samples, fewer than " +
                              std::to_string(k_folds) + " folds");
    for (size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        folds[i] = seen[static_cast<size_t>(l)] % k_folds;
        ++seen[static_cast<size_t>(l)];
    }
    return folds;
}

namespace {

void train_epoch(TypeClassifier& clf, nn::Adam<float>& opt, double lr,
                 const std::vector<Tensor<float>>& inputs, const std::vector<int>& labels,
                 std::vector<int> order, Rng shuffle_rng) {
    shuffle_rng.shuffle(order);
    for (int idx : order) {
        clf.params().zero_grads();
        auto loss = nn::cross_entropy_logits(
            clf.logits(Var<float>::leaf(inputs[static_cast<size_t>(idx)], false)),
            labels[static_cast<size_t>(idx)]);
        loss.backward();
        opt.step(clf.params().items(), static_cast<float>(lr));
    }
}

double subset_accuracy(const TypeClassifier& clf, const std::vector<Tensor<float>>& inputs,
                       const std::vector<int>& labels, const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    int hits = 0;
    for (int i : idx)
        if (clf.predict(inputs[static_cast<size_t>(i)]) == labels[static_cast<size_t>(i)])
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace

TypeClassifier train_type_classifier(const std::vector<Tensor<float>>& inputs,
                                     const std::vector<int>& labels,
                                     const std::vector<int>& train_idx, int num_classes,
                                     int epochs, double lr, uint64_t seed) {
    TypeClassifier clf(num_classes, seed);
    nn::Adam<float> opt(0.9f, 0.999f);
    const Rng root(seed);
    for (int e = 0; e < epochs; ++e)
        train_epoch(clf, opt, lr, inputs, labels, train_idx,
                    root.child("shuffle", static_cast<uint64_t>(e)));
    return clf;
}

double downstream_accuracy(const std::vector<Image>& images, const std::vector<int>& labels,
                           const DcaConfig& cfg) {
    if (images.size() != labels.size())
        throw ConfigError("downstream_accuracy: images/labels size mismatch");
    if (images.empty()) throw ConfigError("downstream_accuracy: empty dataset");

    const std::vector<int> folds = fold_assignment(labels, cfg.k_folds);
    int num_classes = 1;
    for (int l : labels) num_classes = std::max(num_classes, l + 1);

    std::vector<Tensor<float>> inputs;
    inputs.reserve(images.size());
    for (const auto& im : images) inputs.push_back(dca_input(im, cfg.input_size));

    const Rng root(cfg.seed);
    double acc_sum = 0;
    for (int f = 0; f < cfg.k_folds; ++f) {
        std::vector<int> train_idx, val_idx;
        for (size_t i = 0; i < folds.size(); ++i)
            (folds[i] == f ? val_idx : train_idx).push_back(static_cast<int>(i));

        const Rng fold_rng = root.child("dca-fold", static_cast<uint64_t>(f));
        TypeClassifier clf(num_classes, fold_rng.seed());
        nn::Adam<float> opt(0.9f, 0.999f);

        double lr = cfg.lr;
        double best = -1.0;
        int plateau = 0, stall = 0;
        for (int e = 0; e < cfg.max_epochs; ++e) {
            train_epoch(clf, opt, lr, inputs, labels, train_idx,
                        fold_rng.child("shuffle", static_cast<uint64_t>(e)));
            const double acc = subset_accuracy(clf, inputs, labels, val_idx);
            if (acc > best) {
                best = acc;
                plateau = 0;
                stall = 0;
            } else {
                ++plateau;
                ++stall;
            }
            if (stall >= cfg.early_stop_patience) break;
            if (plateau >= cfg.plateau_patience) {
                lr *= cfg.plateau_factor;
                plateau = 0;
            }
        }
        acc_sum += best;
    }
    return acc_sum / cfg.k_folds;
}

}  // namespace chromo::evaluation
