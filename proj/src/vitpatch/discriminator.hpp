#pragma once
// Patch discriminators over paired source/target images: a ViT trunk scoring
// every patch position (the default), and a plain convolutional patch
// discriminator kept as the ablation baseline. Templated on the scalar type
// so gradient oracles can run the exact same graph in double.

#include <cstdint>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/errors.hpp"
#include "core/layers.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

namespace chromo::vitpatch {

struct VitPatchConfig {
    int image_size = 256;
    int patch = 16;
    int dim = 192;
    int heads = 3;
    int blocks = 4;
    int mlp_ratio = 4;

    void validate() const;
    int tokens_per_side() const { return image_size / patch; }
    int tokens() const { return tokens_per_side() * tokens_per_side(); }
};

// Per-head attention matrices captured during a forward pass, head-major
// within each block. Values only; nothing here stays on the tape.
template <class S>
struct AttentionRecordT {
    std::vector<Tensor<S>> maps;  // each (L, L)
};
using AttentionRecord = AttentionRecordT<float>;

// Pre-norm transformer block: x + MHA(norm(x)), then + MLP(norm(.)).
template <class S>
struct MhaBlockT {
    nn::LayerNorm<S> norm1, norm2;
    nn::Linear<S> qkv;   // dim -> 3*dim
    nn::Linear<S> proj;  // dim -> dim
    nn::Linear<S> fc1, fc2;
    int heads = 0;
    int head_dim = 0;

    MhaBlockT() = default;
    MhaBlockT(nn::ParamRegistry<S>& reg, const std::string& name, int dim, int n_heads,
              int mlp_ratio, Rng& rng);

    nn::Var<S> forward(const nn::Var<S>& tokens,
                       std::vector<Tensor<S>>* attn_maps = nullptr) const;
};
using MhaBlock = MhaBlockT<float>;

// Channelwise (source, other) pairing; both images must be single-channel,
// equal-sized, with values in [0,1].
template <class S>
nn::Var<S> paired_input(const nn::Var<S>& source, const nn::Var<S>& other);

template <class S>
class VitPatchDiscriminatorT {
  public:
    VitPatchDiscriminatorT() = default;
    VitPatchDiscriminatorT(const VitPatchConfig& cfg, uint64_t seed);

    const VitPatchConfig& config() const { return cfg_; }
    nn::ParamRegistry<S>& params() { return reg_; }
    const nn::ParamRegistry<S>& params() const { return reg_; }

    // (2,H,W) pair -> (L, dim) token grid, positional embeddings added once
    nn::Var<S> patch_embed(const nn::Var<S>& pair) const;

    // full pass: (2,H,W) -> (S,S) per-patch realness scores in (0,1)
    nn::Var<S> forward(const nn::Var<S>& pair, AttentionRecordT<S>* attn = nullptr) const;

    // the permutation-equivariance oracle runs the trunk without positions
    void set_use_pos_embed(bool on) { use_pos_ = on; }
    bool use_pos_embed() const { return use_pos_; }

    const MhaBlockT<S>& block(int i) const { return blocks_.at(static_cast<size_t>(i)); }
    int block_count() const { return static_cast<int>(blocks_.size()); }

  private:
    VitPatchConfig cfg_;
    nn::ParamRegistry<S> reg_;
    nn::Conv2d<S> embed_;
    nn::Var<S> pos_;
    std::vector<MhaBlockT<S>> blocks_;
    nn::LayerNorm<S> final_norm_;
    nn::Linear<S> head_;
    bool use_pos_ = true;
};
using VitPatchDiscriminator = VitPatchDiscriminatorT<float>;

// pix2pix-style 70x70 patch discriminator: three stride-2 and two stride-1
// 4x4 convolutions, so a 256x256 pair maps to a 30x30 score grid.
template <class S>
class BasicPatchDiscriminatorT {
  public:
    BasicPatchDiscriminatorT() = default;
    explicit BasicPatchDiscriminatorT(uint64_t seed);

    nn::ParamRegistry<S>& params() { return reg_; }
    const nn::ParamRegistry<S>& params() const { return reg_; }

    // (2,H,W) pair -> (H/8 - 2, W/8 - 2) realness scores in (0,1)
    nn::Var<S> forward(const nn::Var<S>& pair) const;

  private:
    nn::ParamRegistry<S> reg_;
    nn::Conv2d<S> c1_, c2_, c3_, c4_, head_;
    nn::InstanceNorm<S> n2_, n3_, n4_;
};
using BasicPatchDiscriminator = BasicPatchDiscriminatorT<float>;

}  // namespace chromo::vitpatch
