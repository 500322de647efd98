#include "motiongen/losses.hpp"

#include <cmath>
#include <numbers>

#include "core/errors.hpp"

namespace chromo::motiongen {

using nn::Var;

namespace {

float bilinear_zero(const Image& im, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
        if (xx < 0 || yy < 0 || xx >= im.w || yy >= im.h) return 0.0;
        return im.at(yy, xx);
    };
    const double top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1);
    const double bot = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1);
    return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace

SpatialTransform sample_transform(Rng& rng) {
    constexpr double kMaxAngle = 15.0 * std::numbers::pi / 180.0;
    SpatialTransform t;
    t.angle = static_cast<float>(rng.uniform(-kMaxAngle, kMaxAngle));
    t.scale = static_cast<float>(rng.uniform(0.9, 1.1));
    t.tx = static_cast<float>(rng.uniform(-10.0, 10.0));
    t.ty = static_cast<float>(rng.uniform(-10.0, 10.0));
    return t;
}

Image apply_transform(const Image& im, const SpatialTransform& t) {
    if (t.is_identity()) return im;
    const double ca = std::cos(static_cast<double>(t.angle));
    const double sa = std::sin(static_cast<double>(t.angle));
    const double s = t.scale;
    const double cx = (im.w - 1) / 2.0;
    const double cy = (im.h - 1) / 2.0;
    Image out(im.h, im.w, 0.f);
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x) {
            // backward map p_src = R(-angle)/s (p - c - t) + c
            const double dx = x - cx - t.tx;
            const double dy = y - cy - t.ty;
            const double sx = (ca * dx + sa * dy) / s + cx;
            const double sy = (-sa * dx + ca * dy) / s + cy;
            out.at(y, x) = bilinear_zero(im, sx, sy);
        }
    return out;
}

Var<float> perceptual_loss(const std::vector<Var<float>>& pred_pyramid,
                           const Var<float>& target,
                           const evaluation::FeatureBackbone& backbone) {
    if (pred_pyramid.empty()) throw DataError("perceptual_loss: empty pyramid");
    if (!pred_pyramid[0].val().same_shape(target.val()))
        throw DataError("perceptual_loss: prediction/target shape mismatch");
    Var<float> tgt = target;
    Var<float> loss;
    bool first = true;
    for (size_t i = 0; i < pred_pyramid.size(); ++i) {
        if (i > 0) {
            tgt = nn::avg_pool2(tgt);
            if (!pred_pyramid[i].val().same_shape(tgt.val()))
                throw DataError("perceptual_loss: pyramid level shape mismatch");
        }
        const auto fp = backbone.features(pred_pyramid[i]);
        const auto ft = backbone.features(tgt);
        for (size_t st = 0; st < fp.size(); ++st) {
            const Var<float> term = nn::l1_mean(fp[st], ft[st]);
            loss = first ? term : nn::add(loss, term);
            first = false;
        }
    }
    return loss;
}

Var<float> perceptual_loss(const Var<float>& pred, const Var<float>& target,
                           const evaluation::FeatureBackbone& backbone, int levels) {
    if (levels < 1) throw ConfigError("perceptual_loss: levels must be >= 1");
    std::vector<Var<float>> pyr;
    pyr.reserve(static_cast<size_t>(levels));
    pyr.push_back(pred);
    for (int i = 1; i < levels; ++i) pyr.push_back(nn::avg_pool2(pyr.back()));
    return perceptual_loss(pyr, target, backbone);
}

EquivarianceParts equivariance_loss(const MotionGenerator& gen, const Image& image,
                                    const SpatialTransform& t) {
    const RegionHeatmaps base = gen.estimate_regions(image);
    const RegionHeatmaps trans = gen.estimate_regions(apply_transform(image, t));
    const int k = base.count();
    const float eps = gen.config().eps;
    const int ratio = gen.config().image_size / gen.config().heat();

    // Linearization of T in heatmap coordinates, precomputed in double so
    // the identity transform gives L = I and b = 0 exactly: heatmap pixel j
    // sits at image coordinate ratio*j + (ratio-1)/2, so T conjugated into
    // heatmap space keeps its linear part and gets b = (I-L) c_hm + t/ratio.
    const double ca = std::cos(static_cast<double>(t.angle));
    const double sa = std::sin(static_cast<double>(t.angle));
    const double s = t.scale;
    const double l00 = s * ca, l01 = -s * sa;
    const double l10 = s * sa, l11 = s * ca;
    const double chm = (gen.config().heat() - 1) / 2.0;
    Tensor<float> lt({2, 2});
    lt.at(0, 0) = static_cast<float>(l00);
    lt.at(0, 1) = static_cast<float>(l01);
    lt.at(1, 0) = static_cast<float>(l10);
    lt.at(1, 1) = static_cast<float>(l11);
    Tensor<float> bt({2});
    bt.data = {static_cast<float>((1.0 - l00 - l01) * chm + t.tx / ratio),
               static_cast<float>((1.0 - l10 - l11) * chm + t.ty / ratio)};
    const Var<float> lin = nn::constant(std::move(lt));
    const Var<float> bias = nn::constant(std::move(bt));

    EquivarianceParts parts;
    for (int i = 0; i < k; ++i) {
        const RegionMoments mt = region_moments(heatmap_channel(trans, i), eps);
        const RegionMoments mb = region_moments(heatmap_channel(base, i), eps);
        const Var<float> mu_pred =
            nn::add(nn::reshape(nn::matmul(lin, nn::reshape(mb.mean, {2, 1})), {2}), bias);
        const Var<float> cov_pred = nn::matmul(nn::matmul(lin, mb.cov), lin, false, true);
        const Var<float> dm = nn::sub(mt.mean, mu_pred);
        const Var<float> dc = nn::sub(mt.cov, cov_pred);
        const Var<float> mk = nn::sqrt_op(nn::sum_all(nn::mul(dm, dm)));
        const Var<float> ck = nn::sqrt_op(nn::sum_all(nn::mul(dc, dc)));
        parts.mean_term = i == 0 ? mk : nn::add(parts.mean_term, mk);
        parts.cov_term = i == 0 ? ck : nn::add(parts.cov_term, ck);
    }
    parts.total = nn::add(parts.mean_term, parts.cov_term);
    return parts;
}

}  // namespace chromo::motiongen
