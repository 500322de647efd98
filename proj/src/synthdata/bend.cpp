#include "synthdata/bend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "synthdata/banding.hpp"

namespace chromo::synthdata {

namespace {

// 1-D interpolant over stations evenly spaced on [0, domain]; linear or
// natural cubic. A single station degenerates to a constant.
class Spline1D {
public:
    Spline1D(const std::vector<float>& values, double domain, int order) : order_(order) {
        n_ = static_cast<int>(values.size());
        y_.assign(values.begin(), values.end());
        if (n_ == 1) return;
        h_ = domain / (n_ - 1);
        m_.assign(static_cast<size_t>(n_), 0.0);
        if (order_ == 3 && n_ > 2) {
            // tridiagonal solve for interior second derivatives, natural ends
            const int k = n_ - 2;
            std::vector<double> diag(static_cast<size_t>(k), 2.0 * h_ * 2.0);
            std::vector<double> off(static_cast<size_t>(k), h_);
            std::vector<double> rhs(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i)
                rhs[static_cast<size_t>(i)] =
                    6.0 * ((y_[static_cast<size_t>(i + 2)] - y_[static_cast<size_t>(i + 1)]) / h_ -
                           (y_[static_cast<size_t>(i + 1)] - y_[static_cast<size_t>(i)]) / h_);
            for (int i = 1; i < k; ++i) {
                const double w = off[static_cast<size_t>(i)] / diag[static_cast<size_t>(i - 1)];
                diag[static_cast<size_t>(i)] -= w * off[static_cast<size_t>(i - 1)];
                rhs[static_cast<size_t>(i)] -= w * rhs[static_cast<size_t>(i - 1)];
            }
            for (int i = k - 1; i >= 0; --i) {
                double v = rhs[static_cast<size_t>(i)];
                if (i + 1 < k) v -= off[static_cast<size_t>(i)] * m_[static_cast<size_t>(i + 2)];
                m_[static_cast<size_t>(i + 1)] = v / diag[static_cast<size_t>(i)];
            }
        }
    }

    double eval(double t) const {
        if (n_ == 1) return y_[0];
        const auto [i, tau] = locate(t);
        const double t0 = i * h_, t1 = t0 + h_;
        if (order_ == 1 || n_ == 2)
            return y_[static_cast<size_t>(i)] +
                   (y_[static_cast<size_t>(i + 1)] - y_[static_cast<size_t>(i)]) * tau;
        const double a = t1 - t, b = t - t0;
        return m_[static_cast<size_t>(i)] * a * a * a / (6.0 * h_) +
               m_[static_cast<size_t>(i + 1)] * b * b * b / (6.0 * h_) +
               (y_[static_cast<size_t>(i)] / h_ - m_[static_cast<size_t>(i)] * h_ / 6.0) * a +
               (y_[static_cast<size_t>(i + 1)] / h_ - m_[static_cast<size_t>(i + 1)] * h_ / 6.0) * b;
    }

    double deriv(double t) const {
        if (n_ == 1) return 0.0;
        const auto [i, tau] = locate(t);
        const double slope =
            (y_[static_cast<size_t>(i + 1)] - y_[static_cast<size_t>(i)]) / h_;
        if (order_ == 1 || n_ == 2) return slope;
        const double t0 = i * h_, t1 = t0 + h_;
        const double a = t1 - t, b = t - t0;
        return -m_[static_cast<size_t>(i)] * a * a / (2.0 * h_) +
               m_[static_cast<size_t>(i + 1)] * b * b / (2.0 * h_) + slope -
               (m_[static_cast<size_t>(i + 1)] - m_[static_cast<size_t>(i)]) * h_ / 6.0;
    }

    double deriv2(double t) const {
        if (n_ == 1 || order_ == 1 || n_ == 2) return 0.0;
        const auto [i, tau] = locate(t);
        return m_[static_cast<size_t>(i)] * (1.0 - tau) + m_[static_cast<size_t>(i + 1)] * tau;
    }

private:
    std::pair<int, double> locate(double t) const {
        // clamp to the station range; the natural end conditions make the
        // clamped evaluation a linear extension
        double u = std::min(std::max(t / h_, 0.0), static_cast<double>(n_ - 1) - 1e-9);
        int i = std::min(static_cast<int>(u), n_ - 2);
        return {i, u - i};
    }

    int n_ = 0, order_ = 3;
    double h_ = 1.0;
    std::vector<double> y_, m_;
};

struct Vec2 {
    double x = 0, y = 0;
};

// Arc-length parameterization of the bent spine x = f(y), anchored so that
// arc parameter v = 0 falls at the body's center row.
class Spine {
public:
    Spine(const Spline1D& f, double yc, int height) : f_(f) {
        const double h = kStep;
        const int n = static_cast<int>(std::floor((height - 1) / h)) + 1;
        t_.resize(static_cast<size_t>(n));
        s_.resize(static_cast<size_t>(n));
        double s = 0;
        double prev_speed = speed(0.0);
        t_[0] = 0;
        s_[0] = 0;
        for (int i = 1; i < n; ++i) {
            const double t = i * h;
            const double sp = speed(t);
            s += 0.5 * (prev_speed + sp) * h;
            t_[static_cast<size_t>(i)] = t;
            s_[static_cast<size_t>(i)] = s;
            prev_speed = sp;
        }
        s_anchor_ = s_at(yc);
    }

    double t_of_v(double v) const {
        const double target = s_anchor_ + v;
        // inverse interpolation on the monotone table
        if (target <= s_.front()) return t_.front();
        if (target >= s_.back()) return t_.back();
        auto it = std::lower_bound(s_.begin(), s_.end(), target);
        const size_t i = static_cast<size_t>(it - s_.begin());
        const double f = (target - s_[i - 1]) / (s_[i] - s_[i - 1]);
        return t_[i - 1] + f * (t_[i] - t_[i - 1]);
    }

    Vec2 point(double v) const {
        const double t = t_of_v(v);
        return {f_.eval(t), t};
    }

    // tangent, normal, curvature at arc parameter v
    void frame(double v, Vec2& g, Vec2& tan, Vec2& nrm, double& kappa) const {
        const double t = t_of_v(v);
        const double fp = f_.deriv(t), fpp = f_.deriv2(t);
        const double nu = std::sqrt(1.0 + fp * fp);
        g = {f_.eval(t), t};
        tan = {fp / nu, 1.0 / nu};
        nrm = {1.0 / nu, -fp / nu};
        kappa = fpp / (nu * nu * nu);
    }

    double max_abs_curvature(double v_lo, double v_hi) const {
        double k = 0;
        for (double v = v_lo; v <= v_hi; v += 0.25) {
            Vec2 g, tan, nrm;
            double kap;
            frame(v, g, tan, nrm, kap);
            k = std::max(k, std::abs(kap));
        }
        return k;
    }

private:
    static constexpr double kStep = 0.125;

    double speed(double t) const {
        const double fp = f_.deriv(t);
        return std::sqrt(1.0 + fp * fp);
    }

    double s_at(double t) const {
        const double u = std::min(std::max(t / kStep, 0.0),
                                  static_cast<double>(t_.size() - 1) - 1e-9);
        const size_t i = static_cast<size_t>(u);
        const double f = u - static_cast<double>(i);
        return s_[i] + f * (s_[i + 1] - s_[i]);
    }

    const Spline1D& f_;
    std::vector<double> t_, s_;
    double s_anchor_ = 0;
};

struct BodyBox {
    int y_top, y_bot, x_min, x_max;
    double yc, c0, halfw;
};

BodyBox find_body(const Image& im) {
    BodyBox b{im.h, -1, im.w, -1, 0, 0, 0};
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            if (im.at(y, x) > 0.f) {
                b.y_top = std::min(b.y_top, y);
                b.y_bot = std::max(b.y_bot, y);
                b.x_min = std::min(b.x_min, x);
                b.x_max = std::max(b.x_max, x);
            }
    if (b.y_bot < 0) throw DataError("bend: image has no foreground");
    b.yc = 0.5 * (b.y_top + b.y_bot);
    b.c0 = 0.5 * (b.x_min + b.x_max);
    b.halfw = 0.5 * (b.x_max - b.x_min);
    return b;
}

float bilinear(const Image& im, double y, double x) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= im.h || xx < 0 || xx >= im.w) return 0.0;
        return im.at(yy, xx);
    };
    return static_cast<float>((1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                              fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1)));
}

}  // namespace

std::pair<Image, Flow> bend(const Image& straight, const BendSpec& spec) {
    if (spec.control_offsets.empty()) throw ConfigError("bend: no control offsets");
    if (spec.interpolation != 1 && spec.interpolation != 3)
        throw ConfigError("bend: interpolation order must be 1 or 3");
    for (float v : spec.control_offsets)
        if (!std::isfinite(v)) throw ConfigError("bend: non-finite control offset");

    const BodyBox body = find_body(straight);
    const double half_len = 0.5 * (body.y_bot - body.y_top);
    const Spline1D f(spec.control_offsets, straight.h - 1, spec.interpolation);
    const Spine spine(f, body.yc, straight.h);

    // medial axis must stay inside the image
    for (double v = -half_len; v <= half_len; v += 1.0) {
        const Vec2 g = spine.point(v);
        const double px = g.x + body.c0;
        if (px < 1.0 || px > straight.w - 2 || g.y < 1.0 || g.y > straight.h - 2)
            throw ConfigError("bend: medial axis leaves the image bounds");
    }

    // self-overlap rejection, part 1: the Jacobian 1 - w*kappa of the smooth
    // interpolant must stay positive across the body (soft edges included).
    // Order-1 splines carry their curvature in kinks where f'' vanishes a.e.,
    // so they are covered only by the collision census below.
    const double wmax = body.halfw + 2.0;
    const double kmax = spine.max_abs_curvature(-half_len - 1.0, half_len + 1.0);
    if (wmax * kmax >= 0.98)
        throw DegenerateBendError("curvature " + std::to_string(kmax) +
                                  " self-overlaps a half-width of " + std::to_string(wmax));

    // Per-row spine frames at arc parameter v = u - yc, u = 0..H-1.  Used for
    // the dense flow and as initial guesses for the inverse projection.
    std::vector<double> gx(static_cast<size_t>(straight.h)), gy(gx.size()), nx(gx.size()),
        ny(gx.size());
    for (int u = 0; u < straight.h; ++u) {
        Vec2 g, tan, nrm;
        double k;
        spine.frame(u - body.yc, g, tan, nrm, k);
        gx[static_cast<size_t>(u)] = g.x + body.c0;
        gy[static_cast<size_t>(u)] = g.y;
        nx[static_cast<size_t>(u)] = nrm.x;
        ny[static_cast<size_t>(u)] = nrm.y;
    }

    // self-overlap rejection, part 2: direct injectivity census. Rasterize
    // Phi over the mask; two foreground pixels from well-separated rows
    // landing on the same bent pixel mean the tube folded onto itself.
    {
        std::vector<int> first_row(static_cast<size_t>(straight.h) * straight.w, -1);
        int mask_n = 0, collisions = 0;
        for (int u = 0; u < straight.h; ++u) {
            for (int x = 0; x < straight.w; ++x) {
                if (straight.at(u, x) <= 0.f) continue;
                ++mask_n;
                const double w = x - body.c0;
                const long bx = std::lround(gx[static_cast<size_t>(u)] + w * nx[static_cast<size_t>(u)]);
                const long by = std::lround(gy[static_cast<size_t>(u)] + w * ny[static_cast<size_t>(u)]);
                if (bx < 0 || bx >= straight.w || by < 0 || by >= straight.h) continue;
                int& owner = first_row[static_cast<size_t>(by) * straight.w + bx];
                if (owner < 0)
                    owner = u;
                else if (std::abs(owner - u) >= 4)
                    ++collisions;
            }
        }
        // Order-1 kinks fold a small wedge (area ~ w^2 tan(turn/2)) no matter
        // how gentle the bend, so tolerate coverage overlap up to the point
        // where it would visibly corrupt the round-trip property.
        if (mask_n > 0 && collisions > 0.04 * mask_n)
            throw DegenerateBendError(std::to_string(collisions) + " of " +
                                      std::to_string(mask_n) +
                                      " body pixels land on already-covered cells");
    }

    // Dense backward flow on the straight grid: straight pixel (u, x) sits at
    // Phi(u, x) in the bent image.
    Flow flow(straight.h, straight.w);
    for (int u = 0; u < straight.h; ++u) {
        for (int x = 0; x < straight.w; ++x) {
            const double w = x - body.c0;
            const double px = gx[static_cast<size_t>(u)] + w * nx[static_cast<size_t>(u)];
            const double py = gy[static_cast<size_t>(u)] + w * ny[static_cast<size_t>(u)];
            flow.dx(u, x) = static_cast<float>(px - x);
            flow.dy(u, x) = static_cast<float>(py - u);
        }
    }

    // Bent image: invert Phi by projecting each bent pixel onto the spine.
    Image bent(straight.h, straight.w);
    // bounding box of the bent body for early rejection
    double bx0 = std::numeric_limits<double>::max(), bx1 = -bx0, by0 = bx0, by1 = -bx0;
    for (double v = -half_len - 1.5; v <= half_len + 1.5; v += 0.5) {
        const Vec2 g = spine.point(v);
        bx0 = std::min(bx0, g.x + body.c0);
        bx1 = std::max(bx1, g.x + body.c0);
        by0 = std::min(by0, g.y);
        by1 = std::max(by1, g.y);
    }
    const double pad = wmax + 1.5;
    for (int qy = 0; qy < straight.h; ++qy) {
        if (qy < by0 - pad || qy > by1 + pad) continue;
        for (int qx = 0; qx < straight.w; ++qx) {
            if (qx < bx0 - pad || qx > bx1 + pad) continue;
            // nearest sampled spine point seeds the projection; samples are one
            // arc unit apart, so Newton starts in the quadratic basin
            double best_d = std::numeric_limits<double>::max();
            int best_u = 0;
            for (int u = 0; u < straight.h; ++u) {
                const double dxs = qx - gx[static_cast<size_t>(u)];
                const double dys = qy - gy[static_cast<size_t>(u)];
                const double d = dxs * dxs + dys * dys;
                if (d < best_d) {
                    best_d = d;
                    best_u = u;
                }
            }
            if (best_d > (wmax + 1.5) * (wmax + 1.5)) continue;
            double v = best_u - body.yc;
            bool ok = false;
            double w = 0;
            for (int it = 0; it < 60; ++it) {
                Vec2 g, tan, nrm;
                double k;
                spine.frame(v, g, tan, nrm, k);
                const double rx = qx - (g.x + body.c0), ry = qy - g.y;
                const double gval = rx * tan.x + ry * tan.y;
                w = rx * nrm.x + ry * nrm.y;
                if (std::abs(gval) < 1e-9) {
                    ok = true;
                    break;
                }
                double gp = -1.0 + w * k;
                if (gp > -0.05) gp = -0.05;
                double step = -gval / gp;
                step = std::min(std::max(step, -1.5), 1.5);
                v += step;
            }
            if (!ok || std::abs(w) > wmax + 0.5) continue;
            const double u = v + body.yc;
            bent.at(qy, qx) = bilinear(straight, u, body.c0 + w);
        }
    }
    return {std::move(bent), std::move(flow)};
}

}  // namespace chromo::synthdata
