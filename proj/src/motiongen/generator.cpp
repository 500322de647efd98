#include "motiongen/generator.hpp"

#include <utility>

#include "core/errors.hpp"

namespace chromo::motiongen {

using nn::Var;

void MotionGenConfig::validate() const {
    if (regions < 1 || regions > 32)
        throw ConfigError("motiongen: regions must lie in [1,32]");
    if (image_size < 64 || image_size % 16 != 0)
        throw ConfigError("motiongen: image_size must be >= 64 and divisible by 16");
}

RegionPredictor::RegionPredictor(nn::ParamRegistry<float>& reg, const std::string& prefix,
                                 int regions, Rng& rng)
    : e0_(reg, prefix + ".e0", 1, 16, rng),
      e1_(reg, prefix + ".e1", 16, 32, rng),
      mid_(reg, prefix + ".mid", 32, 64, rng),
      d1_(reg, prefix + ".d1", 96, 32, rng),
      d0_(reg, prefix + ".d0", 48, 16, rng),
      head_(reg, prefix + ".head", 16, regions, 3, 1, 1, rng) {}

RegionHeatmaps RegionPredictor::forward(const Var<float>& x) const {
    const auto& xv = x.val();
    if (xv.rank() != 3 || xv.dim(0) != 1)
        throw DataError("region predictor: (1,H,W) input required");
    const int hg = xv.dim(1), wg = xv.dim(2);
    if (hg % 4 != 0 || wg % 4 != 0)
        throw DataError("region predictor: grid must be divisible by 4");

    const Var<float> h0 = e0_.forward(x);                     // 16 @ hg
    const Var<float> h1 = e1_.forward(nn::avg_pool2(h0));     // 32 @ hg/2
    const Var<float> hb = mid_.forward(nn::avg_pool2(h1));    // 64 @ hg/4
    const Var<float> u1 =
        d1_.forward(nn::concat_ch<float>({nn::upsample_nearest2(hb), h1}));  // 32 @ hg/2
    const Var<float> u0 =
        d0_.forward(nn::concat_ch<float>({nn::upsample_nearest2(u1), h0}));  // 16 @ hg
    const Var<float> logits = head_.forward(u0);              // K @ hg

    const int k = logits.val().dim(0);
    const Var<float> flat = nn::softmax_rows(nn::reshape(logits, {k, hg * wg}));
    RegionHeatmaps out;
    out.maps = nn::reshape(flat, {k, hg, wg});
    return out;
}

DenseMotionNet::DenseMotionNet(nn::ParamRegistry<float>& reg, const std::string& prefix,
                               int regions, Rng& rng)
    : regions_(regions),
      e0_(reg, prefix + ".e0", 2 * regions + 2, 24, rng),
      e1_(reg, prefix + ".e1", 24, 48, rng),
      mid_(reg, prefix + ".mid", 48, 48, rng),
      u1_(reg, prefix + ".u1", 96, 48, rng),
      u0_(reg, prefix + ".u0", 72, 24, rng),
      head_(reg, prefix + ".head", 24, regions + 2, 3, 1, 1, rng) {}

MotionField DenseMotionNet::forward(const Var<float>& src_small,
                                    const RegionHeatmaps& src_heat,
                                    const RegionHeatmaps& drv_heat,
                                    const std::vector<RegionMotion>& motions,
                                    const Var<float>& bg_affine,
                                    const Var<float>& bg_shift) const {
    const int k = regions_;
    const auto& sv = src_small.val();
    if (sv.rank() != 3 || sv.dim(0) != 1)
        throw DataError("dense motion: (1,H,W) source required");
    const int hg = sv.dim(1), wg = sv.dim(2);
    if (src_heat.count() != k || drv_heat.count() != k ||
        static_cast<int>(motions.size()) != k)
        throw DataError("dense motion: region count mismatch");

    // candidate backward flows, background first
    std::vector<Var<float>> cand;
    cand.reserve(k + 1);
    cand.push_back(background_rows(bg_affine, bg_shift, hg, wg));
    for (int i = 0; i < k; ++i)
        cand.push_back(rows_to_normalized(region_flow_rows(motions[i], hg, wg), hg, wg));

    // hourglass input: the source warped by every candidate, then the
    // heatmap differences (zeros for the background)
    std::vector<Var<float>> parts;
    parts.reserve(k + 3);
    for (const auto& rows : cand)
        parts.push_back(nn::grid_sample(src_small, nn::reshape(rows, {hg, wg, 2})));
    parts.push_back(nn::constant(Tensor<float>::zeros({1, hg, wg})));
    parts.push_back(nn::sub(drv_heat.maps, src_heat.maps));
    const Var<float> x = nn::concat_ch<float>(parts);  // (2K+2, hg, wg)

    const Var<float> h0 = e0_.forward(x);
    const Var<float> h1 = e1_.forward(nn::avg_pool2(h0));
    const Var<float> hb = mid_.forward(nn::avg_pool2(h1));
    const Var<float> u1 = u1_.forward(nn::concat_ch<float>({nn::upsample_nearest2(hb), h1}));
    const Var<float> u0 = u0_.forward(nn::concat_ch<float>({nn::upsample_nearest2(u1), h0}));
    const Var<float> logits = head_.forward(u0);  // (K+2, hg, wg)

    const Var<float> flat = nn::reshape(logits, {k + 2, hg * wg});
    const Var<float> conf = nn::softmax_cols(nn::slice_rows(flat, 0, k + 1));
    const Var<float> occ =
        nn::sigmoid(nn::reshape(nn::slice_rows(flat, k + 1, 1), {1, hg, wg}));

    MotionField f;
    f.flow = nn::reshape(compose_flow(cand, conf), {hg, wg, 2});
    f.confidence = nn::reshape(conf, {k + 1, hg, wg});
    f.occlusion = occ;
    return f;
}

Var<float> background_rows(const Var<float>& bg_affine, const Var<float>& bg_shift, int hg,
                           int wg) {
    if (bg_affine.val().rank() != 2 || bg_affine.val().dim(0) != 2 ||
        bg_affine.val().dim(1) != 2 || bg_shift.val().numel() != 2)
        throw DataError("background_rows: (2,2) affine and (2) shift required");
    const float cx = static_cast<float>(wg - 1) / 2.f;
    const float cy = static_cast<float>(hg - 1) / 2.f;
    Tensor<float> neg_c({2}), ctr({2});
    neg_c.data = {-cx, -cy};
    ctr.data = {cx, cy};
    const Var<float> z = nn::constant(grid_rows(hg, wg));
    const Var<float> centered = nn::add_rowvec(z, nn::constant(std::move(neg_c)));
    const Var<float> mapped = nn::matmul(centered, bg_affine, false, true);
    const Var<float> rows =
        nn::add_rowvec(mapped, nn::add(bg_shift, nn::constant(std::move(ctr))));
    return rows_to_normalized(rows, hg, wg);
}

Var<float> compose_flow(const std::vector<Var<float>>& candidate_rows,
                        const Var<float>& confidence) {
    const auto& cv = confidence.val();
    if (cv.rank() != 2 || cv.dim(0) != static_cast<int>(candidate_rows.size()))
        throw DataError("compose_flow: confidence rows must match candidate count");
    if (candidate_rows.empty()) throw DataError("compose_flow: no candidates");
    const int n = cv.dim(1);
    Var<float> acc;
    for (size_t i = 0; i < candidate_rows.size(); ++i) {
        const auto& rv = candidate_rows[i].val();
        if (rv.rank() != 2 || rv.dim(0) != n || rv.dim(1) != 2)
            throw DataError("compose_flow: candidate rows must be (N,2)");
        const Var<float> w = nn::reshape(
            nn::slice_rows(confidence, static_cast<int>(i), 1), {n});
        const Var<float> term = nn::scale_rows(candidate_rows[i], w);
        acc = i == 0 ? term : nn::add(acc, term);
    }
    return acc;
}

MotionGenerator::MotionGenerator(const MotionGenConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng root(seed);
    Rng r_rp = root.child("region-predictor");
    Rng r_dm = root.child("dense-motion");
    Rng r_enc = root.child("encoder");
    Rng r_dec = root.child("decoder");
    rp_ = RegionPredictor(reg_, "regions", cfg_.regions, r_rp);
    dm_ = DenseMotionNet(reg_, "motion", cfg_.regions, r_dm);
    Tensor<float> eye({2, 2});
    eye.at(0, 0) = 1.f;
    eye.at(1, 1) = 1.f;
    bg_affine_ = reg_.add("background.affine", std::move(eye));
    bg_shift_ = reg_.add("background.shift", Tensor<float>::zeros({2}));
    enc1_ = ConvBlock(reg_, "encoder.c1", 1, 16, r_enc);
    enc2_ = ConvBlock(reg_, "encoder.c2", 16, 32, r_enc);
    enc3_ = ConvBlock(reg_, "encoder.c3", 32, 64, r_enc);
    dec1_ = ConvBlock(reg_, "decoder.c1", 64, 32, r_dec);
    dec2_ = ConvBlock(reg_, "decoder.c2", 32, 16, r_dec);
    out_ = nn::Conv2d<float>(reg_, "decoder.out", 16, 1, 3, 1, 1, r_dec);
}

RegionHeatmaps MotionGenerator::estimate_regions(const Image& image) const {
    if (image.h != cfg_.image_size || image.w != cfg_.image_size)
        throw DataError("estimate_regions: image size does not match the configuration");
    const Image small = downsample_to(image, cfg_.heat(), cfg_.heat());
    return rp_.forward(nn::constant(to_tensor(small)));
}

MotionField MotionGenerator::dense_motion(const Image& source,
                                          const RegionHeatmaps& src_heat,
                                          const RegionHeatmaps& drv_heat) const {
    if (source.h != cfg_.image_size || source.w != cfg_.image_size)
        throw DataError("dense_motion: image size does not match the configuration");
    const Image small = downsample_to(source, cfg_.heat(), cfg_.heat());
    const Var<float> src_small = nn::constant(to_tensor(small));
    std::vector<RegionMotion> motions;
    motions.reserve(cfg_.regions);
    for (int i = 0; i < cfg_.regions; ++i) {
        const RegionMoments sm = region_moments(heatmap_channel(src_heat, i), cfg_.eps);
        const RegionMoments dm = region_moments(heatmap_channel(drv_heat, i), cfg_.eps);
        motions.push_back(region_affine(sm, dm));
    }
    return dm_.forward(src_small, src_heat, drv_heat, motions, bg_affine_, bg_shift_);
}

GeneratorOutput MotionGenerator::generate(const Image& source, const Image& driving) const {
    if (source.h != cfg_.image_size || source.w != cfg_.image_size ||
        driving.h != cfg_.image_size || driving.w != cfg_.image_size)
        throw DataError("generate: image size does not match the configuration");

    GeneratorOutput out;
    out.src_regions = estimate_regions(source);
    out.drv_regions = estimate_regions(driving);
    out.motion = dense_motion(source, out.src_regions, out.drv_regions);

    const Var<float> x = nn::constant(to_tensor(source));
    const Var<float> f1 = enc1_.forward(x);                    // 16 @ S
    const Var<float> f2 = enc2_.forward(nn::avg_pool2(f1));    // 32 @ S/2
    const Var<float> f3 = enc3_.forward(nn::avg_pool2(f2));    // 64 @ S/4

    const Var<float> warped = nn::grid_sample(f3, out.motion.flow);
    const Var<float> gated = nn::mul_by_map(warped, out.motion.occlusion);

    const Var<float> d1 = dec1_.forward(gated);                          // 32 @ S/4
    const Var<float> d2 = dec2_.forward(nn::upsample_nearest2(d1));      // 16 @ S/2
    out.image = nn::sigmoid(out_.forward(nn::upsample_nearest2(d2)));    // 1 @ S

    out.pyramid.reserve(4);
    out.pyramid.push_back(out.image);
    for (int i = 1; i < 4; ++i) out.pyramid.push_back(nn::avg_pool2(out.pyramid.back()));
    return out;
}

}  // namespace chromo::motiongen
