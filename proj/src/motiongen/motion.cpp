#include "motiongen/motion.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace chromo::motiongen {

using nn::Var;

namespace {

// coordinate constant maps: f(x, y) per grid point, row-major
template <class F>
Tensor<float> coord_map(int hg, int wg, F f) {
    Tensor<float> t({hg, wg});
    for (int y = 0; y < hg; ++y)
        for (int x = 0; x < wg; ++x)
            t.at(y, x) = static_cast<float>(f(x, y));
    return t;
}

Var<float> elem(const Var<float>& m4, int i) { return nn::select(m4, i); }

}  // namespace

nn::Var<float> heatmap_channel(const RegionHeatmaps& h, int k) {
    const auto& v = h.maps.val();
    if (v.rank() != 3 || k < 0 || k >= v.dim(0))
        throw NumericError("heatmap_channel: bad region index");
    const int hg = v.dim(1), wg = v.dim(2);
    return nn::reshape(nn::slice_rows(nn::reshape(h.maps, {v.dim(0), hg * wg}), k, 1),
                       {hg, wg});
}

RegionMoments region_moments(const nn::Var<float>& heatmap, float eps) {
    const auto& hv = heatmap.val();
    if (hv.rank() != 2) throw NumericError("region_moments: (H,W) heatmap required");
    const int hg = hv.dim(0), wg = hv.dim(1);

    Var<float> h = heatmap;
    double total = 0;
    for (float v : hv.data) total += v;
    if (total == 0.0) {
        // degenerate map: substitute the uniform distribution
        Tensor<float> u({hg, wg});
        for (auto& v : u.data) v = 1.f / static_cast<float>(hg * wg);
        h = nn::constant(std::move(u));
    }

    const Var<float> cx = nn::constant(coord_map(hg, wg, [](int x, int) { return x; }));
    const Var<float> cy = nn::constant(coord_map(hg, wg, [](int, int y) { return y; }));
    const Var<float> cxx = nn::constant(coord_map(hg, wg, [](int x, int) { return x * x; }));
    const Var<float> cyy = nn::constant(coord_map(hg, wg, [](int, int y) { return y * y; }));
    const Var<float> cxy = nn::constant(coord_map(hg, wg, [](int x, int y) { return x * y; }));

    const Var<float> mx = nn::sum_all(nn::mul(h, cx));
    const Var<float> my = nn::sum_all(nn::mul(h, cy));
    const Var<float> mxx = nn::sum_all(nn::mul(h, cxx));
    const Var<float> myy = nn::sum_all(nn::mul(h, cyy));
    const Var<float> mxy = nn::sum_all(nn::mul(h, cxy));

    // cov = E[pp^T] - mean mean^T + eps I (the expanded centered formula)
    const Var<float> vxx = nn::add_scalar(nn::sub(mxx, nn::mul(mx, mx)), eps);
    const Var<float> vyy = nn::add_scalar(nn::sub(myy, nn::mul(my, my)), eps);
    const Var<float> vxy = nn::sub(mxy, nn::mul(mx, my));

    RegionMoments r;
    r.mean = nn::stack_scalars<float>({mx, my});
    r.cov = nn::reshape(nn::stack_scalars<float>({vxx, vxy, vxy, vyy}), {2, 2});
    return r;
}

nn::Var<float> sqrtm2x2(const nn::Var<float>& m) {
    const Var<float> m4 = nn::reshape(m, {4});
    const Var<float> a = elem(m4, 0), c = elem(m4, 3);
    const Var<float> b = nn::mul_scalar(nn::add(elem(m4, 1), elem(m4, 2)), 0.5f);
    const Var<float> det = nn::sub(nn::mul(a, c), nn::mul(b, b));
    if (!(det.val().data[0] > 0.f) || !std::isfinite(det.val().data[0]))
        throw NumericError("sqrtm2x2: matrix is not positive definite");
    const Var<float> s = nn::sqrt_op(det);
    const Var<float> t =
        nn::sqrt_op(nn::add(nn::add(a, c), nn::mul_scalar(s, 2.f)));
    const Var<float> p = nn::divide(nn::add(a, s), t);
    const Var<float> q = nn::divide(b, t);
    const Var<float> r = nn::divide(nn::add(c, s), t);
    return nn::reshape(nn::stack_scalars<float>({p, q, q, r}), {2, 2});
}

nn::Var<float> invsqrtm2x2(const nn::Var<float>& m) {
    const Var<float> m4 = nn::reshape(m, {4});
    const Var<float> a = elem(m4, 0), c = elem(m4, 3);
    const Var<float> b = nn::mul_scalar(nn::add(elem(m4, 1), elem(m4, 2)), 0.5f);
    const Var<float> det = nn::sub(nn::mul(a, c), nn::mul(b, b));
    if (!(det.val().data[0] > 0.f) || !std::isfinite(det.val().data[0]))
        throw NumericError("invsqrtm2x2: matrix is not positive definite");
    const Var<float> s = nn::sqrt_op(det);
    const Var<float> t =
        nn::sqrt_op(nn::add(nn::add(a, c), nn::mul_scalar(s, 2.f)));
    // inv((M + sI)/t) = t adj(M + sI) / det(M + sI), det(M + sI) = t^2 s
    const Var<float> denom = nn::mul(t, s);
    const Var<float> p = nn::divide(nn::add(c, s), denom);
    const Var<float> q = nn::neg(nn::divide(b, denom));
    const Var<float> r = nn::divide(nn::add(a, s), denom);
    return nn::reshape(nn::stack_scalars<float>({p, q, q, r}), {2, 2});
}

RegionMotion region_affine(const RegionMoments& src, const RegionMoments& drv) {
    RegionMotion m;
    m.src = src;
    m.drv = drv;
    m.affine = nn::matmul(sqrtm2x2(drv.cov), invsqrtm2x2(src.cov));
    m.affine_inv = nn::matmul(sqrtm2x2(src.cov), invsqrtm2x2(drv.cov));
    const Var<float> as =
        nn::reshape(nn::matmul(m.affine, nn::reshape(src.mean, {2, 1})), {2});
    m.translation = nn::sub(drv.mean, as);
    return m;
}

Tensor<float> grid_rows(int hg, int wg) {
    Tensor<float> t({hg * wg, 2});
    size_t i = 0;
    for (int y = 0; y < hg; ++y)
        for (int x = 0; x < wg; ++x) {
            t.data[i++] = static_cast<float>(x);
            t.data[i++] = static_cast<float>(y);
        }
    return t;
}

Tensor<float> identity_flow_rows(int hg, int wg) {
    Tensor<float> t({hg * wg, 2});
    size_t i = 0;
    for (int y = 0; y < hg; ++y)
        for (int x = 0; x < wg; ++x) {
            t.data[i++] = (2.f * static_cast<float>(x) + 1.f) / static_cast<float>(wg) - 1.f;
            t.data[i++] = (2.f * static_cast<float>(y) + 1.f) / static_cast<float>(hg) - 1.f;
        }
    return t;
}

nn::Var<float> region_flow_rows(const RegionMotion& motion, int hg, int wg) {
    const Var<float> z = nn::constant(grid_rows(hg, wg));
    // rows = Z A^{-T} + (src_mean - A^{-1} drv_mean)
    const Var<float> za = nn::matmul(z, motion.affine_inv, false, true);
    const Var<float> bias = nn::sub(
        motion.src.mean,
        nn::reshape(nn::matmul(motion.affine_inv, nn::reshape(motion.drv.mean, {2, 1})), {2}));
    return nn::add_rowvec(za, bias);
}

nn::Var<float> rows_to_normalized(const nn::Var<float>& rows_px, int hg, int wg) {
    const auto& rv = rows_px.val();
    if (rv.rank() != 2 || rv.dim(1) != 2)
        throw NumericError("rows_to_normalized: (N,2) rows required");
    // per-column affine: x' = 2x/wg + (1/wg - 1), y' likewise with hg.
    // Power-of-two grid sizes keep every term dyadic, so integer pixel rows
    // land bitwise on identity_flow_rows.
    Tensor<float> d({2, 2});
    d.at(0, 0) = 2.f / static_cast<float>(wg);
    d.at(1, 1) = 2.f / static_cast<float>(hg);
    Tensor<float> off({2});
    off.data = {1.f / static_cast<float>(wg) - 1.f, 1.f / static_cast<float>(hg) - 1.f};
    return nn::add_rowvec(nn::matmul(rows_px, nn::constant(std::move(d))),
                          nn::constant(std::move(off)));
}

nn::Var<float> warp(const nn::Var<float>& grid_vals, const nn::Var<float>& flow) {
    return nn::grid_sample(grid_vals, flow);
}

}  // namespace chromo::motiongen
