#pragma once
// Adversarial training loop: region-motion generator against a patch
// discriminator, one D update then one G update per pair, with multi-step
// learning-rate decay, per-epoch checkpoints, and bit-exact resume.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/adam.hpp"
#include "core/image.hpp"
#include "core/serialize.hpp"
#include "evaluation/backbone.hpp"
#include "motiongen/generator.hpp"
#include "motiongen/losses.hpp"
#include "vitpatch/discriminator.hpp"

namespace chromo::training {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 1;  // the pipeline is pair-at-a-time
    float lr_gen = 5e-5f;
    float lr_disc = 1e-5f;
    std::vector<int> milestones = {30, 45};
    float lr_decay_gamma = 0.1f;
    uint64_t seed = 1;
    int blocks = 4;    // discriminator depth N
    int patch = 16;    // discriminator patch stride p
    int dim = 192;     // discriminator token width d
    int regions = 10;  // generator region count K
    int image_size = 256;
    float w_adversarial = 1.f;
    float w_perceptual = 10.f;
    float w_equivariance = 10.f;
    int val_fold = 0;          // which of the 5 folds is held out
    bool basic_patch = false;  // swap the ViT trunk for the conv baseline

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct TrainPair {
    Image source;   // bent chromosome
    Image driving;  // straight target
};

// Probability-space BCE per token: D targets 1 on real scores and 0 on fake,
// G's adversarial term targets 1 on fake. Non-finite scores -> NumericError.
std::pair<nn::Var<float>, nn::Var<float>> adversarial_losses(const nn::Var<float>& real_scores,
                                                             const nn::Var<float>& fake_scores);

struct StepLosses {
    float loss_d = 0.f;
    float loss_g_adv = 0.f;
    float loss_perc = 0.f;
    float loss_equiv = 0.f;
    // D loss on the identical (real, frozen-fake) batch after the D update;
    // filled only when the step is asked to measure it
    std::optional<float> loss_d_after;
};

// fold k of the 5-fold split covers indices [floor(k*n/5), floor((k+1)*n/5))
std::pair<std::vector<int>, std::vector<int>> split_folds(int n, int val_fold);

class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    motiongen::MotionGenerator& generator() { return gen_; }
    const motiongen::MotionGenerator& generator() const { return gen_; }
    nn::ParamRegistry<float>& disc_params();
    const nn::ParamRegistry<float>& disc_params() const;

    // one D update on (real, fake-detached), then one G update on
    // adversarial + perceptual + equivariance
    StepLosses train_step(const TrainPair& pair, const motiongen::SpatialTransform& t,
                          float lr_g, float lr_d, bool measure_d_progress = false);

    // the same losses without touching any parameter (pre-training rows)
    StepLosses eval_losses(const TrainPair& pair, const motiongen::SpatialTransform& t) const;

    // mean training-perceptual distance over held-out pairs; NaN when empty
    float val_perceptual(const std::vector<TrainPair>& val) const;

    void save(const std::string& path, int epoch, float best_val, int best_epoch) const;
    // rebuilds a trainer from a checkpoint; returns the stored epoch counter
    static std::pair<Trainer, int> restore(const std::string& path);

    nn::Adam<float>& adam_gen() { return adam_g_; }
    nn::Adam<float>& adam_disc() { return adam_d_; }

  private:
    nn::Var<float> disc_forward(const nn::Var<float>& pair) const;

    TrainConfig cfg_;
    motiongen::MotionGenerator gen_;
    vitpatch::VitPatchDiscriminator vit_;
    vitpatch::BasicPatchDiscriminator basic_;
    evaluation::FeatureBackbone backbone_;
    nn::Adam<float> adam_g_, adam_d_;
};

struct TrainResult {
    std::string final_checkpoint;
    std::string metrics_csv;
    int best_epoch = 0;
    float best_val = std::numeric_limits<float>::quiet_NaN();
};

// Runs the full schedule under out_dir: checkpoints/ckpt_epoch_{k} every
// epoch (last three plus every tenth kept), metrics.csv with one row per
// epoch including a pre-training epoch-0 row. resume_from continues an
// interrupted run bit-exactly from that checkpoint.
TrainResult train_loop(const TrainConfig& cfg, const std::vector<TrainPair>& pairs,
                       const std::string& out_dir, const std::string& resume_from = {});

}  // namespace chromo::training
