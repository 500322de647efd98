#include "vitpatch/discriminator.hpp"

#include <cmath>
#include <utility>

namespace chromo::vitpatch {

void VitPatchConfig::validate() const {
    if (image_size < 16) throw ConfigError("vitpatch: image size must be at least 16");
    if (patch < 1 || image_size % patch != 0)
        throw ConfigError("vitpatch: patch size must divide the image size");
    if (dim < 1 || heads < 1 || dim % heads != 0)
        throw ConfigError("vitpatch: head count must divide the embedding dim");
    if (blocks < 1) throw ConfigError("vitpatch: at least one transformer block required");
    if (mlp_ratio < 1) throw ConfigError("vitpatch: mlp ratio must be at least 1");
}

template <class S>
MhaBlockT<S>::MhaBlockT(nn::ParamRegistry<S>& reg, const std::string& name, int dim, int n_heads,
                        int mlp_ratio, Rng& rng)
    : norm1(reg, name + ".norm1", dim),
      norm2(reg, name + ".norm2", dim),
      qkv(reg, name + ".qkv", dim, 3 * dim, rng),
      proj(reg, name + ".proj", dim, dim, rng),
      fc1(reg, name + ".fc1", dim, mlp_ratio * dim, rng),
      fc2(reg, name + ".fc2", mlp_ratio * dim, dim, rng),
      heads(n_heads),
      head_dim(dim / n_heads) {}

template <class S>
nn::Var<S> MhaBlockT<S>::forward(const nn::Var<S>& tokens,
                                 std::vector<Tensor<S>>* attn_maps) const {
    const int d = heads * head_dim;
    if (tokens.val().rank() != 2 || tokens.dim(1) != d)
        throw DataError("mha_block: tokens must be (L, dim)");

    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));
    const auto n1 = norm1.forward(tokens);
    const auto qkv_all = qkv.forward(n1);  // (L, 3*dim), heads side by side
    std::vector<nn::Var<S>> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const auto q = nn::slice_cols(qkv_all, h * head_dim, head_dim);
        const auto k = nn::slice_cols(qkv_all, d + h * head_dim, head_dim);
        const auto v = nn::slice_cols(qkv_all, 2 * d + h * head_dim, head_dim);
        const auto attn = nn::softmax_rows(nn::mul_scalar(nn::matmul(q, k, false, true), scale));
        if (attn_maps) attn_maps->push_back(attn.val());
        head_outs.push_back(nn::matmul(attn, v));
    }
    const auto x = nn::add(tokens, proj.forward(nn::concat_cols(head_outs)));
    return nn::add(x, fc2.forward(nn::gelu(fc1.forward(norm2.forward(x)))));
}

template <class S>
nn::Var<S> paired_input(const nn::Var<S>& source, const nn::Var<S>& other) {
    const auto& sv = source.val();
    const auto& ov = other.val();
    if (sv.rank() != 3 || ov.rank() != 3 || sv.dim(0) != 1 || ov.dim(0) != 1 ||
        sv.dim(1) != ov.dim(1) || sv.dim(2) != ov.dim(2))
        throw DataError("paired_input: two aligned (1,H,W) images required");
    for (S v : sv.data)
        if (!(v >= S(0) && v <= S(1))) throw DataError("paired_input: source values outside [0,1]");
    for (S v : ov.data)
        if (!(v >= S(0) && v <= S(1))) throw DataError("paired_input: paired values outside [0,1]");
    return nn::concat_ch<S>({source, other});
}

template <class S>
VitPatchDiscriminatorT<S>::VitPatchDiscriminatorT(const VitPatchConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
    cfg_.validate();
    Rng root(seed);
    Rng r_embed = root.child("patch-embed");
    Rng r_pos = root.child("pos-embed");
    Rng r_blocks = root.child("blocks");
    Rng r_head = root.child("head");

    embed_ = nn::Conv2d<S>(reg_, "vit.embed", 2, cfg_.dim, cfg_.patch, cfg_.patch, 0, r_embed);
    Tensor<S> pos({cfg_.tokens(), cfg_.dim});
    for (auto& v : pos.data) v = S(0.02) * static_cast<S>(r_pos.normal());
    pos_ = reg_.add("vit.pos", std::move(pos));
    blocks_.reserve(static_cast<size_t>(cfg_.blocks));
    for (int i = 0; i < cfg_.blocks; ++i) {
        Rng rb = r_blocks.child("block", i);
        blocks_.emplace_back(reg_, "vit.b" + std::to_string(i), cfg_.dim, cfg_.heads,
                             cfg_.mlp_ratio, rb);
    }
    final_norm_ = nn::LayerNorm<S>(reg_, "vit.norm", cfg_.dim);
    head_ = nn::Linear<S>(reg_, "vit.head", cfg_.dim, 1, r_head);
}

template <class S>
nn::Var<S> VitPatchDiscriminatorT<S>::patch_embed(const nn::Var<S>& pair) const {
    if (pair.val().rank() != 3 || pair.dim(0) != 2 || pair.dim(1) != cfg_.image_size ||
        pair.dim(2) != cfg_.image_size)
        throw DataError("vitpatch: paired input must be (2, image_size, image_size)");
    const auto grid = embed_.forward(pair);  // (dim, S, S)
    auto tok = nn::transpose(nn::reshape(grid, {cfg_.dim, cfg_.tokens()}));
    if (use_pos_) tok = nn::add(tok, pos_);
    return tok;
}

template <class S>
nn::Var<S> VitPatchDiscriminatorT<S>::forward(const nn::Var<S>& pair,
                                              AttentionRecordT<S>* attn) const {
    auto tok = patch_embed(pair);
    for (const auto& b : blocks_) tok = b.forward(tok, attn ? &attn->maps : nullptr);
    const auto scores = nn::sigmoid(head_.forward(final_norm_.forward(tok)));  // (L, 1)
    const int s = cfg_.tokens_per_side();
    return nn::reshape(scores, {s, s});
}

template <class S>
BasicPatchDiscriminatorT<S>::BasicPatchDiscriminatorT(uint64_t seed) {
    Rng root(seed);
    Rng r = root.child("convs");
    c1_ = nn::Conv2d<S>(reg_, "patch.c1", 2, 32, 4, 2, 1, r);
    c2_ = nn::Conv2d<S>(reg_, "patch.c2", 32, 64, 4, 2, 1, r);
    n2_ = nn::InstanceNorm<S>(reg_, "patch.c2.in", 64);
    c3_ = nn::Conv2d<S>(reg_, "patch.c3", 64, 128, 4, 2, 1, r);
    n3_ = nn::InstanceNorm<S>(reg_, "patch.c3.in", 128);
    c4_ = nn::Conv2d<S>(reg_, "patch.c4", 128, 256, 4, 1, 1, r);
    n4_ = nn::InstanceNorm<S>(reg_, "patch.c4.in", 256);
    head_ = nn::Conv2d<S>(reg_, "patch.head", 256, 1, 4, 1, 1, r);
}

template <class S>
nn::Var<S> BasicPatchDiscriminatorT<S>::forward(const nn::Var<S>& pair) const {
    if (pair.val().rank() != 3 || pair.dim(0) != 2)
        throw DataError("basic patch: paired input must be (2,H,W)");
    const int h = pair.dim(1), w = pair.dim(2);
    if (h < 32 || w < 32 || h % 8 != 0 || w % 8 != 0)
        throw DataError("basic patch: spatial dims must be multiples of 8, at least 32");
    const auto x1 = nn::leaky_relu(c1_.forward(pair));
    const auto x2 = nn::leaky_relu(n2_.forward(c2_.forward(x1)));
    const auto x3 = nn::leaky_relu(n3_.forward(c3_.forward(x2)));
    const auto x4 = nn::leaky_relu(n4_.forward(c4_.forward(x3)));
    const auto scores = nn::sigmoid(head_.forward(x4));  // (1, h/8-2, w/8-2)
    return nn::reshape(scores, {scores.dim(1), scores.dim(2)});
}

template struct MhaBlockT<float>;
template struct MhaBlockT<double>;
template class VitPatchDiscriminatorT<float>;
template class VitPatchDiscriminatorT<double>;
template class BasicPatchDiscriminatorT<float>;
template class BasicPatchDiscriminatorT<double>;
template nn::Var<float> paired_input<float>(const nn::Var<float>&, const nn::Var<float>&);
template nn::Var<double> paired_input<double>(const nn::Var<double>&, const nn::Var<double>&);

}  // namespace chromo::vitpatch
