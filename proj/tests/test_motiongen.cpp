#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "core/errors.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "evaluation/backbone.hpp"
#include "motiongen/generator.hpp"
#include "motiongen/losses.hpp"
#include "motiongen/motion.hpp"

using namespace chromo;
using namespace chromo::motiongen;
using nn::Var;

namespace {

Tensor<float> delta_map(int hg, int wg, int x, int y) {
    Tensor<float> t({hg, wg});
    t.at(y, x) = 1.f;
    return t;
}

Tensor<float> random_heatmap(int hg, int wg, Rng& rng) {
    Tensor<float> t({hg, wg});
    double total = 0;
    for (auto& v : t.data) {
        v = static_cast<float>(rng.uniform()) + 1e-3f;
        total += v;
    }
    for (auto& v : t.data) v = static_cast<float>(v / total);
    return t;
}

// a few soft blobs on black, values in [0,1]
Image blob_image(int size, uint64_t seed, int blobs = 8) {
    Rng rng(seed);
    Image im(size, size);
    for (int b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0.15, 0.85) * size;
        const double cy = rng.uniform(0.15, 0.85) * size;
        const double sig = rng.uniform(0.02, 0.06) * size;
        const double amp = rng.uniform(0.5, 1.0);
        const int r = static_cast<int>(3 * sig);
        for (int y = std::max(0, int(cy) - r); y < std::min(size, int(cy) + r); ++y)
            for (int x = std::max(0, int(cx) - r); x < std::min(size, int(cx) + r); ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                im.at(y, x) = std::min(
                    1.f, im.at(y, x) + static_cast<float>(amp * std::exp(-d2 / (2 * sig * sig))));
            }
    }
    return im;
}

RegionMoments const_moments(float mx, float my, float a, float b, float c) {
    Tensor<float> mean({2});
    mean.data = {mx, my};
    Tensor<float> cov({2, 2});
    cov.data = {a, b, b, c};
    RegionMoments m;
    m.mean = nn::constant(std::move(mean));
    m.cov = nn::constant(std::move(cov));
    return m;
}

float max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    REQUIRE(a.data.size() == b.data.size());
    float m = 0.f;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

float max_abs_off_identity(const Tensor<float>& m) {
    return std::max(std::max(std::abs(m.at(0, 0) - 1.f), std::abs(m.at(1, 1) - 1.f)),
                    std::max(std::abs(m.at(0, 1)), std::abs(m.at(1, 0))));
}

}  // namespace

TEST_CASE("region moments: delta heatmap is a point mass with eps covariance") {
    const auto m = region_moments(nn::constant(delta_map(64, 64, 17, 9)));
    CHECK(m.mean.val().data[0] == 17.f);
    CHECK(m.mean.val().data[1] == 9.f);
    CHECK(m.cov.val().at(0, 0) == kCovEps);
    CHECK(m.cov.val().at(1, 1) == kCovEps);
    CHECK(m.cov.val().at(0, 1) == 0.f);
    CHECK(m.cov.val().at(1, 0) == 0.f);

    const auto corner = region_moments(nn::constant(delta_map(32, 32, 0, 0)));
    CHECK(corner.mean.val().data[0] == 0.f);
    CHECK(corner.mean.val().data[1] == 0.f);
    CHECK(corner.cov.val().at(0, 0) == kCovEps);

    CHECK_THROWS_AS(region_moments(nn::constant(Tensor<float>::zeros({2, 8, 8}))),
                    NumericError);
}

TEST_CASE("region moments: uniform map sits at the grid center") {
    Tensor<float> u({64, 64});
    for (auto& v : u.data) v = 1.f / 4096.f;
    const auto m = region_moments(nn::constant(u));
    CHECK(m.mean.val().data[0] == doctest::Approx(31.5).epsilon(1e-5));
    CHECK(m.mean.val().data[1] == doctest::Approx(31.5).epsilon(1e-5));
    // discrete uniform over 0..63 has variance (64^2 - 1)/12
    CHECK(m.cov.val().at(0, 0) == doctest::Approx(341.25).epsilon(1e-4));
    CHECK(m.cov.val().at(1, 1) == doctest::Approx(341.25).epsilon(1e-4));
    CHECK(std::abs(m.cov.val().at(0, 1)) < 1e-2);

    // the all-zero fallback substitutes exactly this uniform map
    const auto z = region_moments(nn::constant(Tensor<float>::zeros({64, 64})));
    CHECK(z.mean.val().data == m.mean.val().data);
    CHECK(z.cov.val().data == m.cov.val().data);
}

TEST_CASE("region moments: two-point mass matches the closed form") {
    Tensor<float> h({64, 64});
    h.at(20, 10) = 0.5f;  // (x=10, y=20)
    h.at(12, 40) = 0.5f;  // (x=40, y=12)
    const auto m = region_moments(nn::constant(h));
    CHECK(m.mean.val().data[0] == 25.f);
    CHECK(m.mean.val().data[1] == 16.f);
    // cov = 0.5 (p1-mu)(p1-mu)^T + 0.5 (p2-mu)(p2-mu)^T + eps I
    CHECK(m.cov.val().at(0, 0) == doctest::Approx(225.0 + 1e-4).epsilon(1e-7));
    CHECK(m.cov.val().at(1, 1) == doctest::Approx(16.0 + 1e-4).epsilon(1e-6));
    CHECK(m.cov.val().at(0, 1) == -60.f);
    CHECK(m.cov.val().at(1, 0) == -60.f);
}

TEST_CASE("matrix square roots: closed forms, inverses, and rejection") {
    const auto s = sqrtm2x2(nn::constant([] {
        Tensor<float> t({2, 2});
        t.data = {4.f, 0.f, 0.f, 1.f};
        return t;
    }()));
    CHECK(s.val().data == std::vector<float>{2.f, 0.f, 0.f, 1.f});

    Tensor<float> eye({2, 2});
    eye.data = {1.f, 0.f, 0.f, 1.f};
    const auto isq = invsqrtm2x2(nn::constant(eye));
    CHECK(isq.val().data == std::vector<float>{1.f, 0.f, 0.f, 1.f});

    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        // SPD via Cholesky factor with bounded-away diagonal
        const float l0 = static_cast<float>(rng.uniform(0.5, 2.0));
        const float l1 = static_cast<float>(rng.uniform(-1.0, 1.0));
        const float l2 = static_cast<float>(rng.uniform(0.5, 2.0));
        Tensor<float> mt({2, 2});
        mt.data = {l0 * l0, l0 * l1, l0 * l1, l1 * l1 + l2 * l2};
        const Var<float> m = nn::constant(mt);
        const auto r = sqrtm2x2(m);
        const auto rr = nn::matmul(r, r);
        CHECK(max_abs_diff(rr.val(), mt) < 1e-5f * (1.f + std::abs(mt.at(1, 1))));
        const auto prod = nn::matmul(sqrtm2x2(m), invsqrtm2x2(m));
        CHECK(max_abs_off_identity(prod.val()) < 1e-5f);
    }

    Tensor<float> indef({2, 2});
    indef.data = {1.f, 2.f, 2.f, 1.f};
    CHECK_THROWS_AS(sqrtm2x2(nn::constant(indef)), NumericError);
    Tensor<float> nan_m({2, 2});
    nan_m.data = {std::nanf(""), 0.f, 0.f, 1.f};
    CHECK_THROWS_AS(invsqrtm2x2(nn::constant(nan_m)), NumericError);
}

TEST_CASE("region affine: identical moments give the identity transport") {
    // worst conditioning: point masses, cov = eps I
    const auto a1 = region_moments(nn::constant(delta_map(64, 64, 17, 9)));
    const auto a2 = region_moments(nn::constant(delta_map(64, 64, 17, 9)));
    const auto ma = region_affine(a1, a2);
    REQUIRE(max_abs_off_identity(ma.affine.val()) < 1e-6f);
    REQUIRE(max_abs_off_identity(ma.affine_inv.val()) < 1e-6f);
    CHECK(std::abs(ma.translation.val().data[0]) < 1e-4f);
    CHECK(std::abs(ma.translation.val().data[1]) < 1e-4f);

    Rng rng(7171);
    float worst = 0.f;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor<float> h = random_heatmap(64, 64, rng);
        const auto s = region_moments(nn::constant(h));
        const auto d = region_moments(nn::constant(h));
        const auto m = region_affine(s, d);
        worst = std::max(worst, max_abs_off_identity(m.affine.val()));
        CHECK(std::abs(m.translation.val().data[0]) < 1e-4f);
        CHECK(std::abs(m.translation.val().data[1]) < 1e-4f);
    }
    MESSAGE("identical-moment transport worst |A - I|: ", worst);
    REQUIRE(worst < 1e-6f);
}

TEST_CASE("region affine: pure translation and the diagonal stretch") {
    const auto s = region_moments(nn::constant(delta_map(64, 64, 10, 12)));
    const auto d = region_moments(nn::constant(delta_map(64, 64, 18, 9)));
    const auto m = region_affine(s, d);
    CHECK(max_abs_off_identity(m.affine.val()) < 1e-6f);
    CHECK(m.translation.val().data[0] == doctest::Approx(8.0).epsilon(1e-5));
    CHECK(m.translation.val().data[1] == doctest::Approx(-3.0).epsilon(1e-5));

    // src cov I, drv cov diag(4,1): every intermediate is dyadic, so the
    // closed form lands exactly on diag(2,1)
    const auto stretch =
        region_affine(const_moments(0.f, 0.f, 1.f, 0.f, 1.f),
                      const_moments(0.f, 0.f, 4.f, 0.f, 1.f));
    CHECK(stretch.affine.val().data == std::vector<float>{2.f, 0.f, 0.f, 1.f});
    CHECK(stretch.translation.val().data == std::vector<float>{0.f, 0.f});
    CHECK(stretch.affine_inv.val().data == std::vector<float>{0.5f, 0.f, 0.f, 1.f});
}

TEST_CASE("region affine: forward and backward transports compose to identity") {
    Rng rng(515);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = region_moments(nn::constant(random_heatmap(64, 64, rng)));
        const auto d = region_moments(nn::constant(random_heatmap(64, 64, rng)));
        const auto fwd = region_affine(s, d);
        const auto bwd = region_affine(d, s);
        // the reverse transport is the stored inverse, computed identically
        CHECK(bwd.affine.val().data == fwd.affine_inv.val().data);
        const auto prod = nn::matmul(fwd.affine, bwd.affine);
        REQUIRE(max_abs_off_identity(prod.val()) < 1e-4f);
        const auto self_inv = nn::matmul(fwd.affine, fwd.affine_inv);
        CHECK(max_abs_off_identity(self_inv.val()) < 1e-5f);
    }
}

TEST_CASE("flow helpers: pixel grids land exactly on the identity grid") {
    for (int n : {16, 32, 64}) {
        const auto norm = rows_to_normalized(nn::constant(grid_rows(n, n)), n, n);
        CHECK(norm.val().data == identity_flow_rows(n, n).data);
    }

    RegionMotion m;
    m.affine = nn::constant([] {
        Tensor<float> t({2, 2});
        t.data = {1.f, 0.f, 0.f, 1.f};
        return t;
    }());
    m.affine_inv = m.affine;
    Tensor<float> mu({2});
    mu.data = {7.f, 31.f};
    m.src.mean = nn::constant(mu);
    m.drv.mean = nn::constant(mu);
    m.translation = nn::constant(Tensor<float>::zeros({2}));
    const auto rows = region_flow_rows(m, 64, 64);
    CHECK(rows.val().data == grid_rows(64, 64).data);
    CHECK(rows_to_normalized(rows, 64, 64).val().data == identity_flow_rows(64, 64).data);
}

TEST_CASE("warp: identity flow is bitwise exact and unit shifts relocate pixels") {
    Rng rng(99);
    Tensor<float> img({2, 64, 64});
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());

    const auto ident = nn::reshape(nn::constant(identity_flow_rows(64, 64)), {64, 64, 2});
    const auto same = warp(nn::constant(img), ident);
    CHECK(same.val().data == img.data);

    Tensor<float> shifted({64 * 64, 2});
    size_t i = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            shifted.data[i++] = (2.f * (x + 1) + 1.f) / 64.f - 1.f;
            shifted.data[i++] = (2.f * y + 1.f) / 64.f - 1.f;
        }
    const auto out = warp(nn::constant(img), nn::reshape(nn::constant(shifted), {64, 64, 2}));
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 63; ++x) REQUIRE(out.val().at(c, y, x) == img.at(c, y, x + 1));
            REQUIRE(out.val().at(c, y, 63) == 0.f);
        }
}

TEST_CASE("background rows: fresh parameters reproduce the identity grid") {
    Tensor<float> eye({2, 2});
    eye.data = {1.f, 0.f, 0.f, 1.f};
    const Var<float> b = Var<float>::leaf(eye, true);
    const Var<float> t = Var<float>::leaf(Tensor<float>::zeros({2}), true);
    CHECK(background_rows(b, t, 64, 64).val().data == identity_flow_rows(64, 64).data);
    CHECK(background_rows(b, t, 32, 32).val().data == identity_flow_rows(32, 32).data);

    Tensor<float> sh({2});
    sh.data = {4.f, 0.f};
    const auto rows = background_rows(b, Var<float>::leaf(sh, false), 64, 64);
    // x' = (2(x+4)+1)/64 - 1 at every grid point
    CHECK(rows.val().at(0, 0) == (2.f * 4.f + 1.f) / 64.f - 1.f);
    CHECK(rows.val().at(5, 0) == (2.f * 9.f + 1.f) / 64.f - 1.f);
    CHECK(rows.val().at(5, 1) == (2.f * 0.f + 1.f) / 64.f - 1.f);

    CHECK_THROWS_AS(background_rows(t, t, 8, 8), DataError);
}

TEST_CASE("compose flow: convex combinations of candidates") {
    const int n = 16 * 16;
    const Var<float> ident = nn::constant(identity_flow_rows(16, 16));
    Tensor<float> shift_t = identity_flow_rows(16, 16);
    for (size_t i = 0; i < shift_t.data.size(); i += 2) shift_t.data[i] += 0.25f;
    const Var<float> shifted = nn::constant(shift_t);

    // all mass on the identity background -> identity, bit for bit
    Tensor<float> onehot0({2, n});
    for (int j = 0; j < n; ++j) onehot0.at(0, j) = 1.f;
    CHECK(compose_flow({ident, shifted}, nn::constant(onehot0)).val().data ==
          identity_flow_rows(16, 16).data);

    // all mass on a constant-shift region -> that shift everywhere
    Tensor<float> onehot1({2, n});
    for (int j = 0; j < n; ++j) onehot1.at(1, j) = 1.f;
    CHECK(compose_flow({ident, shifted}, nn::constant(onehot1)).val().data == shift_t.data);

    // random simplex weights stay inside the per-pixel hull
    Rng rng(2024);
    std::vector<Var<float>> cands;
    for (int c = 0; c < 3; ++c) {
        Tensor<float> t({n, 2});
        for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        cands.push_back(nn::constant(t));
    }
    Tensor<float> conf({3, n});
    for (int j = 0; j < n; ++j) {
        double tot = 0;
        for (int c = 0; c < 3; ++c) {
            conf.at(c, j) = static_cast<float>(rng.uniform()) + 1e-3f;
            tot += conf.at(c, j);
        }
        for (int c = 0; c < 3; ++c) conf.at(c, j) = static_cast<float>(conf.at(c, j) / tot);
    }
    const auto mix = compose_flow(cands, nn::constant(conf));
    for (int j = 0; j < n; ++j)
        for (int d = 0; d < 2; ++d) {
            float lo = 1e9f, hi = -1e9f;
            for (int c = 0; c < 3; ++c) {
                lo = std::min(lo, cands[c].val().at(j, d));
                hi = std::max(hi, cands[c].val().at(j, d));
            }
            REQUIRE(mix.val().at(j, d) >= lo - 1e-6f);
            REQUIRE(mix.val().at(j, d) <= hi + 1e-6f);
        }

    CHECK_THROWS_AS(compose_flow({ident}, nn::constant(onehot0)), DataError);
    CHECK_THROWS_AS(compose_flow({}, nn::constant(onehot0)), DataError);
}

TEST_CASE("motion generator config validation") {
    MotionGenConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.heat() == 64);
    cfg.regions = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.regions = 33;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.regions = 10;
    cfg.image_size = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.image_size = 48;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(MotionGenerator(cfg, 1), ConfigError);
}

TEST_CASE("estimate regions: normalized heatmaps, determinism, dead-sum gradients") {
    const MotionGenConfig cfg;
    const MotionGenerator gen(cfg, 0xC0FFEEull);
    const Image img = blob_image(256, 31);

    const auto h = gen.estimate_regions(img);
    REQUIRE(h.maps.shape() == std::vector<int>{10, 64, 64});
    for (int k = 0; k < 10; ++k) {
        const Var<float> ch = heatmap_channel(h, k);
        const auto& v = ch.val();
        double sum = 0;
        float lo = 1.f;
        for (float x : v.data) {
            sum += x;
            lo = std::min(lo, x);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(lo > 0.f);
    }

    const auto h2 = gen.estimate_regions(img);
    CHECK(h2.maps.val().data == h.maps.val().data);

    // normalization kills the gradient of any map's total mass
    const auto s = nn::sum_all(heatmap_channel(h, 3));
    s.backward();
    for (const auto& [name, p] : gen.params().items()) {
        if (!p.has_grad()) continue;
        float g = 0.f;
        for (float x : p.grad().data) g = std::max(g, std::abs(x));
        CAPTURE(name);
        REQUIRE(g < 1e-5f);
    }
    for (const char* pname : {"regions.head.w", "regions.e0.w"}) {
        const Var<float> p = gen.params().get(pname);
        const float keep = p.val().data[0];
        p.val_mut().data[0] = keep + 0.1f;
        const Var<float> hi = heatmap_channel(gen.estimate_regions(img), 3);
        double up = 0;
        for (float x : hi.val().data) up += x;
        p.val_mut().data[0] = keep - 0.1f;
        const Var<float> lo_ch = heatmap_channel(gen.estimate_regions(img), 3);
        double dn = 0;
        for (float x : lo_ch.val().data) dn += x;
        p.val_mut().data[0] = keep;
        CAPTURE(pname);
        CHECK(std::abs(up - dn) / 0.2 < 1e-5);
    }

    CHECK_THROWS_AS(gen.estimate_regions(Image(128, 128)), DataError);
}

TEST_CASE("dense motion: same-image field is the identity with a valid simplex") {
    const MotionGenerator gen(MotionGenConfig{}, 0xBEEFull);
    const Image img = blob_image(256, 77);
    const auto h = gen.estimate_regions(img);
    const auto f = gen.dense_motion(img, h, h);

    REQUIRE(f.flow.shape() == std::vector<int>{64, 64, 2});
    const Tensor<float> ident = identity_flow_rows(64, 64);
    float dev = 0.f;
    for (size_t i = 0; i < ident.data.size(); ++i)
        dev = std::max(dev, std::abs(f.flow.val().data[i] - ident.data[i]));
    MESSAGE("same-image composite flow deviation: ", dev);
    REQUIRE(dev < 1e-5f);

    REQUIRE(f.confidence.shape() == std::vector<int>{11, 64, 64});
    for (int j = 0; j < 64 * 64; ++j) {
        double colsum = 0;
        for (int c = 0; c < 11; ++c) {
            const float v = f.confidence.val().data[static_cast<size_t>(c) * 4096 + j];
            CHECK(v >= 0.f);
            colsum += v;
        }
        REQUIRE(colsum == doctest::Approx(1.0).epsilon(1e-5));
    }

    REQUIRE(f.occlusion.shape() == std::vector<int>{1, 64, 64});
    for (float v : f.occlusion.val().data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
    for (float v : f.flow.val().data) CHECK(std::isfinite(v));

    RegionHeatmaps wrong;
    wrong.maps = nn::constant(Tensor<float>::zeros({3, 64, 64}));
    CHECK_THROWS_AS(gen.dense_motion(img, wrong, wrong), Error);
}

TEST_CASE("generate: shape, range, pyramid, determinism, gradient plumbing") {
    const MotionGenerator gen(MotionGenConfig{}, 0x5EEDull);
    const Image source = blob_image(256, 5);
    const Image driving = blob_image(256, 6);

    const auto out = gen.generate(source, driving);
    REQUIRE(out.image.shape() == std::vector<int>{1, 256, 256});
    for (float v : out.image.val().data) {
        REQUIRE(v >= 0.f);
        REQUIRE(v <= 1.f);
    }
    REQUIRE(out.pyramid.size() == 4);
    CHECK(out.pyramid[1].shape() == std::vector<int>{1, 128, 128});
    CHECK(out.pyramid[3].shape() == std::vector<int>{1, 32, 32});
    CHECK(out.src_regions.count() == 10);
    CHECK(out.drv_regions.count() == 10);

    const auto again = gen.generate(source, driving);
    CHECK(again.image.val().data == out.image.val().data);

    // every stage of the model feels a gradient from the output image
    nn::mean_all(out.image).backward();
    for (const char* pname : {"encoder.c1.w", "decoder.out.w", "regions.head.w",
                              "motion.head.w", "background.affine", "background.shift"}) {
        const Var<float> p = gen.params().get(pname);
        CAPTURE(pname);
        REQUIRE(p.has_grad());
        float g = 0.f;
        for (float x : p.grad().data) g = std::max(g, std::abs(x));
        REQUIRE(g > 0.f);
    }

    CHECK_THROWS_AS(gen.generate(Image(128, 128), driving), DataError);
    CHECK_THROWS_AS(gen.generate(source, Image(64, 64)), DataError);
}

TEST_CASE("generator construction: seeded determinism") {
    const MotionGenConfig cfg;
    const MotionGenerator a(cfg, 9), b(cfg, 9), c(cfg, 10);
    REQUIRE(a.params().items().size() == b.params().items().size());
    bool any_diff = false;
    for (size_t i = 0; i < a.params().items().size(); ++i) {
        const auto& [na, pa] = a.params().items()[i];
        const auto& [nb, pb] = b.params().items()[i];
        CHECK(na == nb);
        CHECK(pa.val().data == pb.val().data);
        if (c.params().items()[i].second.val().data != pa.val().data) any_diff = true;
    }
    CHECK(any_diff);
    CHECK(a.params().has("regions.e0.w"));
    CHECK(a.params().has("motion.u1.in.g"));
    CHECK(a.params().has("decoder.c2.w"));
}

TEST_CASE("perceptual loss: zero at equality, symmetric, monotone, differentiable") {
    const evaluation::FeatureBackbone bb(evaluation::kBackboneTrain);
    Rng rng(808);
    Tensor<float> xt({1, 64, 64}), yt({1, 64, 64});
    for (auto& v : xt.data) v = static_cast<float>(rng.uniform());
    for (auto& v : yt.data) v = static_cast<float>(rng.uniform());

    CHECK(perceptual_loss(nn::constant(xt), nn::constant(xt), bb).item() == 0.f);

    const float ab = perceptual_loss(nn::constant(xt), nn::constant(yt), bb).item();
    const float ba = perceptual_loss(nn::constant(yt), nn::constant(xt), bb).item();
    CHECK(ab == ba);
    CHECK(ab > 0.f);

    Tensor<float> half({1, 64, 64});
    for (size_t i = 0; i < half.data.size(); ++i)
        half.data[i] = 0.5f * (xt.data[i] + yt.data[i]);
    const float mid = perceptual_loss(nn::constant(half), nn::constant(yt), bb).item();
    CHECK(ab > mid);
    CHECK(mid > 0.f);

    // the pyramid overload is the same computation
    const Var<float> pred = Var<float>::leaf(xt, true);
    std::vector<Var<float>> pyr{pred};
    for (int i = 1; i < 4; ++i) pyr.push_back(nn::avg_pool2(pyr.back()));
    const auto from_pyr = perceptual_loss(pyr, nn::constant(yt), bb);
    CHECK(from_pyr.item() == ab);

    from_pyr.backward();
    REQUIRE(pred.has_grad());
    float g = 0.f;
    for (float v : pred.grad().data) g = std::max(g, std::abs(v));
    CHECK(g > 0.f);

    CHECK_THROWS_AS(perceptual_loss(nn::constant(xt), nn::constant(Tensor<float>::zeros({1, 32, 32})), bb),
                    DataError);
    CHECK_THROWS_AS(perceptual_loss(nn::constant(xt), nn::constant(xt), bb, 0), ConfigError);
}

TEST_CASE("apply transform: identity is bitwise, integer translation relocates pixels") {
    const Image im = blob_image(64, 12);
    const Image same = apply_transform(im, SpatialTransform{});
    CHECK(same.px == im.px);

    Image delta(64, 64);
    delta.at(20, 30) = 1.f;
    SpatialTransform tr;
    tr.tx = 5.f;
    tr.ty = -3.f;
    const Image moved = apply_transform(delta, tr);
    CHECK(moved.at(17, 35) == 1.f);
    double total = 0;
    for (float v : moved.px) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    SpatialTransform far;
    far.tx = 300.f;
    const Image gone = apply_transform(im, far);
    for (float v : gone.px) CHECK(v == 0.f);

    Rng rng(55);
    const SpatialTransform t = sample_transform(rng);
    const Image warped = apply_transform(im, t);
    for (float v : warped.px) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("sample transform stays inside the documented ranges") {
    Rng rng(642);
    const float max_angle = static_cast<float>(15.0 * std::numbers::pi / 180.0);
    for (int i = 0; i < 100; ++i) {
        const SpatialTransform t = sample_transform(rng);
        CHECK(std::abs(t.angle) <= max_angle);
        CHECK(t.scale >= 0.9f);
        CHECK(t.scale <= 1.1f);
        CHECK(std::abs(t.tx) <= 10.f);
        CHECK(std::abs(t.ty) <= 10.f);
    }
}

TEST_CASE("equivariance: identity transform is exactly zero") {
    const MotionGenerator gen(MotionGenConfig{}, 0xE9ull);
    const Image img = blob_image(256, 21);
    const auto parts = equivariance_loss(gen, img, SpatialTransform{});
    CHECK(parts.mean_term.item() == 0.f);
    CHECK(parts.cov_term.item() == 0.f);
    CHECK(parts.total.item() == 0.f);

    Rng rng(3);
    const auto t = sample_transform(rng);
    const auto p2 = equivariance_loss(gen, img, t);
    CHECK(p2.mean_term.item() >= 0.f);
    CHECK(p2.cov_term.item() >= 0.f);
    CHECK(p2.total.item() == p2.mean_term.item() + p2.cov_term.item());
    CHECK(p2.total.item() > 0.f);
}

TEST_CASE("equivariance: translation oracle against direct moment computation") {
    const MotionGenerator gen(MotionGenConfig{}, 0xABull);
    const Image img = blob_image(256, 84);
    SpatialTransform tr;
    tr.tx = 8.f;
    tr.ty = -4.f;

    const auto parts = equivariance_loss(gen, img, tr);

    const auto base = gen.estimate_regions(img);
    const auto trans = gen.estimate_regions(apply_transform(img, tr));
    double expected = 0;
    for (int k = 0; k < base.count(); ++k) {
        const Var<float> chb = heatmap_channel(base, k);
        const Var<float> cht = heatmap_channel(trans, k);
        const auto& hb = chb.val();
        const auto& ht = cht.val();
        double bx = 0, by = 0, tx = 0, ty = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                bx += hb.at(y, x) * x;
                by += hb.at(y, x) * y;
                tx += ht.at(y, x) * x;
                ty += ht.at(y, x) * y;
            }
        const double dx = tx - (bx + 8.0 / 4.0);
        const double dy = ty - (by - 4.0 / 4.0);
        expected += std::sqrt(dx * dx + dy * dy);
    }
    CHECK(parts.mean_term.item() == doctest::Approx(expected).epsilon(1e-3));
}
