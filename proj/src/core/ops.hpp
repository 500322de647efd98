#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "core/autograd.hpp"

// Differentiable tensor ops. Each op builds the forward value eagerly and
// registers a closure that accumulates into its parents' gradients. Closures
// skip any input whose subgraph does not require gradients, so e.g. frozen
// discriminator weights cost nothing during the generator step.

namespace chromo::nn {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EMap = Eigen::Map<EMat<S>>;
template <class S>
using ECMap = Eigen::Map<const EMat<S>>;

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    if (!a.val().same_shape(b.val())) throw Error("add: shape mismatch");
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
    });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    if (!a.val().same_shape(b.val())) throw Error("sub: shape mismatch");
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor<S> g = self.grad;
            for (auto& v : g.data) v = -v;
            self.parents[1]->accumulate(g);
        }
    });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    if (!a.val().same_shape(b.val())) throw Error("mul: shape mismatch");
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& self) {
        if (self.parents[0]->requires_grad) {
            Tensor<S> g = self.grad;
            const auto& bv = self.parents[1]->value;
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= bv.data[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor<S> g = self.grad;
            const auto& av = self.parents[0]->value;
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= av.data[i];
            self.parents[1]->accumulate(g);
        }
    });
}

template <class S>
Var<S> divide(const Var<S>& a, const Var<S>& b) {
    if (!a.val().same_shape(b.val())) throw Error("divide: shape mismatch");
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.val().data[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor<S> g = self.grad;
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] /= bv.data[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor<S> g = self.grad;
            for (size_t i = 0; i < g.data.size(); ++i)
                g.data[i] *= -av.data[i] / (bv.data[i] * bv.data[i]);
            self.parents[1]->accumulate(g);
        }
    });
}

template <class S>
Var<S> add_scalar(const Var<S>& a, S c) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v += c;
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    });
}

template <class S>
Var<S> mul_scalar(const Var<S>& a, S c) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v *= c;
    return make_op_node<S>(std::move(out), {a}, [c](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        for (auto& v : g.data) v *= c;
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> neg(const Var<S>& a) {
    return mul_scalar(a, S(-1));
}

// ---------------------------------------------------------------------------
// activations

template <class S>
Var<S> relu(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        const auto& x = self.parents[0]->value;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] <= S(0)) g.data[i] = S(0);
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S alpha = S(0.2)) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = v > S(0) ? v : alpha * v;
    return make_op_node<S>(std::move(out), {a}, [alpha](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        const auto& x = self.parents[0]->value;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] <= S(0)) g.data[i] *= alpha;
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = S(1) / (S(1) + std::exp(-v));
    Tensor<S> saved = out;
    return make_op_node<S>(std::move(out), {a}, [saved](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            const S y = saved.data[i];
            g.data[i] *= y * (S(1) - y);
        }
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> tanh_act(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = std::tanh(v);
    Tensor<S> saved = out;
    return make_op_node<S>(std::move(out), {a}, [saved](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= S(1) - saved.data[i] * saved.data[i];
        self.parents[0]->accumulate(g);
    });
}

// tanh-approximation GELU.
template <class S>
Var<S> gelu(const Var<S>& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Tensor<S> out = a.val();
    for (auto& v : out.data) {
        double x = static_cast<double>(v);
        v = static_cast<S>(0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))));
    }
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        const auto& xs = self.parents[0]->value;
        for (size_t i = 0; i < g.data.size(); ++i) {
            double x = static_cast<double>(xs.data[i]);
            double u = kC * (x + kA * x * x * x);
            double t = std::tanh(u);
            double du = kC * (1.0 + 3.0 * kA * x * x);
            double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            g.data[i] *= static_cast<S>(d);
        }
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> sqrt_op(const Var<S>& a) {
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = std::sqrt(v);
    Tensor<S> saved = out;
    return make_op_node<S>(std::move(out), {a}, [saved](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = self.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= S(0.5) / saved.data[i];
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// reductions and losses

template <class S>
Var<S> sum_all(const Var<S>& a) {
    S s = 0;
    for (S v : a.val().data) s += v;
    return make_op_node<S>(Tensor<S>::scalar(s), {a}, [](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = Tensor<S>::full(self.parents[0]->value.shape, self.grad.data[0]);
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
    const S n = static_cast<S>(a.val().numel());
    S s = 0;
    for (S v : a.val().data) s += v;
    return make_op_node<S>(Tensor<S>::scalar(s / n), {a}, [n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g = Tensor<S>::full(self.parents[0]->value.shape, self.grad.data[0] / n);
        self.parents[0]->accumulate(g);
    });
}

// mean |a - b|; the subgradient at 0 is taken as 0.
template <class S>
Var<S> l1_mean(const Var<S>& a, const Var<S>& b) {
    if (!a.val().same_shape(b.val())) throw Error("l1_mean: shape mismatch");
    const S n = static_cast<S>(a.val().numel());
    S s = 0;
    for (size_t i = 0; i < a.val().data.size(); ++i)
        s += std::abs(a.val().data[i] - b.val().data[i]);
    return make_op_node<S>(Tensor<S>::scalar(s / n), {a, b}, [n](Node<S>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const S g0 = self.grad.data[0] / n;
        auto signed_grad = [&](S sign_mul) {
            Tensor<S> g = Tensor<S>::zeros(av.shape);
            for (size_t i = 0; i < g.data.size(); ++i) {
                const S d = av.data[i] - bv.data[i];
                g.data[i] = d > S(0) ? g0 * sign_mul : (d < S(0) ? -g0 * sign_mul : S(0));
            }
            return g;
        };
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(signed_grad(S(1)));
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(signed_grad(S(-1)));
    });
}

// sum |a - b|.
template <class S>
Var<S> l1_sum(const Var<S>& a, const Var<S>& b) {
    return mul_scalar(l1_mean(a, b), static_cast<S>(a.val().numel()));
}

// Binary cross-entropy on probability scores against a constant target map,
// averaged per element. Exact 0 at a perfect match, ln 2 at score 0.5.
template <class S>
Var<S> bce_mean(const Var<S>& p, const Tensor<S>& target) {
    if (!p.val().same_shape(target)) throw Error("bce_mean: shape mismatch");
    const double eps = 1e-12;
    const S n = static_cast<S>(p.val().numel());
    double s = 0;
    for (size_t i = 0; i < p.val().data.size(); ++i) {
        // each log argument is floored separately so a perfect match is an
        // exact zero rather than eps-sized noise
        double pv = static_cast<double>(p.val().data[i]);
        double t = static_cast<double>(target.data[i]);
        double term = 0.0;
        if (t > 0.0) term -= t * std::log(std::max(pv, eps));
        if (t < 1.0) term -= (1.0 - t) * std::log(std::max(1.0 - pv, eps));
        s += term;
    }
    return make_op_node<S>(Tensor<S>::scalar(static_cast<S>(s / n)), {p},
                           [target, n](Node<S>& self) {
                               if (!self.parents[0]->requires_grad) return;
                               const double eps = 1e-7;
                               const auto& pv = self.parents[0]->value;
                               Tensor<S> g = Tensor<S>::zeros(pv.shape);
                               const double g0 = static_cast<double>(self.grad.data[0] / n);
                               for (size_t i = 0; i < g.data.size(); ++i) {
                                   double pc = std::min(1.0 - eps,
                                                        std::max(eps, static_cast<double>(pv.data[i])));
                                   double t = static_cast<double>(target.data[i]);
                                   g.data[i] = static_cast<S>(g0 * (-t / pc + (1.0 - t) / (1.0 - pc)));
                               }
                               self.parents[0]->accumulate(g);
                           });
}

// Numerically safe sigmoid + BCE fused on logits: softplus(z) - t*z, averaged.
// Same function as bce_mean(sigmoid(z), t) but with bounded gradients.
template <class S>
Var<S> bce_logits_mean(const Var<S>& z, const Tensor<S>& target) {
    if (!z.val().same_shape(target)) throw Error("bce_logits_mean: shape mismatch");
    const S n = static_cast<S>(z.val().numel());
    double s = 0;
    for (size_t i = 0; i < z.val().data.size(); ++i) {
        double x = static_cast<double>(z.val().data[i]);
        double t = static_cast<double>(target.data[i]);
        double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        s += sp - t * x;
    }
    return make_op_node<S>(Tensor<S>::scalar(static_cast<S>(s / n)), {z},
                           [target, n](Node<S>& self) {
                               if (!self.parents[0]->requires_grad) return;
                               const auto& zv = self.parents[0]->value;
                               Tensor<S> g = Tensor<S>::zeros(zv.shape);
                               const S g0 = self.grad.data[0] / n;
                               for (size_t i = 0; i < g.data.size(); ++i) {
                                   double x = static_cast<double>(zv.data[i]);
                                   double sig = 1.0 / (1.0 + std::exp(-x));
                                   g.data[i] = g0 * static_cast<S>(sig - static_cast<double>(
                                                                             target.data[i]));
                               }
                               self.parents[0]->accumulate(g);
                           });
}

// Cross-entropy over class logits (flat vector) with an integer label.
template <class S>
Var<S> cross_entropy_logits(const Var<S>& logits, int label) {
    const auto& z = logits.val();
    const int c = static_cast<int>(z.numel());
    if (label < 0 || label >= c) throw Error("cross_entropy_logits: label out of range");
    double zmax = z.data[0];
    for (S v : z.data) zmax = std::max(zmax, static_cast<double>(v));
    double lse = 0;
    for (S v : z.data) lse += std::exp(static_cast<double>(v) - zmax);
    lse = std::log(lse) + zmax;
    double loss = lse - static_cast<double>(z.data[label]);
    return make_op_node<S>(Tensor<S>::scalar(static_cast<S>(loss)), {logits},
                           [label, lse](Node<S>& self) {
                               if (!self.parents[0]->requires_grad) return;
                               const auto& zv = self.parents[0]->value;
                               Tensor<S> g = Tensor<S>::zeros(zv.shape);
                               const S g0 = self.grad.data[0];
                               for (size_t i = 0; i < g.data.size(); ++i) {
                                   double p = std::exp(static_cast<double>(zv.data[i]) - lse);
                                   g.data[i] = g0 * static_cast<S>(p - (static_cast<int>(i) == label ? 1.0 : 0.0));
                               }
                               self.parents[0]->accumulate(g);
                           });
}

// ---------------------------------------------------------------------------
// linear algebra

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
    const auto& av = a.val();
    const auto& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2) throw Error("matmul: rank-2 tensors required");
    const int m = ta ? av.dim(1) : av.dim(0);
    const int k = ta ? av.dim(0) : av.dim(1);
    const int kb = tb ? bv.dim(1) : bv.dim(0);
    const int n = tb ? bv.dim(0) : bv.dim(1);
    if (k != kb) throw Error("matmul: inner dimension mismatch");
    // Products run on Eigen-owned (hence always identically aligned) copies:
    // kernel accumulation order then depends only on shapes, keeping results
    // bitwise reproducible whatever heap addresses the tensors landed on.
    Tensor<S> out({m, n});
    {
        const EMat<S> A = ECMap<S>(av.ptr(), av.dim(0), av.dim(1));
        const EMat<S> B = ECMap<S>(bv.ptr(), bv.dim(0), bv.dim(1));
        EMat<S> C(m, n);
        if (!ta && !tb)
            C.noalias() = A * B;
        else if (ta && !tb)
            C.noalias() = A.transpose() * B;
        else if (!ta && tb)
            C.noalias() = A * B.transpose();
        else
            C.noalias() = A.transpose() * B.transpose();
        EMap<S>(out.ptr(), m, n) = C;
    }
    return make_op_node<S>(std::move(out), {a, b}, [ta, tb, m, n](Node<S>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const EMat<S> A = ECMap<S>(av.ptr(), av.dim(0), av.dim(1));
        const EMat<S> B = ECMap<S>(bv.ptr(), bv.dim(0), bv.dim(1));
        const EMat<S> G = ECMap<S>(self.grad.ptr(), m, n);
        if (self.parents[0]->requires_grad) {
            auto& ga = self.parents[0]->grad_buffer();
            EMat<S> GA(av.dim(0), av.dim(1));
            // dA' = G B'^T, transposed back if A was transposed.
            if (!ta && !tb)
                GA.noalias() = G * B.transpose();
            else if (!ta && tb)
                GA.noalias() = G * B;
            else if (ta && !tb)
                GA.noalias() = B * G.transpose();
            else
                GA.noalias() = B.transpose() * G.transpose();
            EMap<S>(ga.ptr(), av.dim(0), av.dim(1)) += GA;
        }
        if (self.parents[1]->requires_grad) {
            auto& gb = self.parents[1]->grad_buffer();
            EMat<S> GB(bv.dim(0), bv.dim(1));
            if (!ta && !tb)
                GB.noalias() = A.transpose() * G;
            else if (ta && !tb)
                GB.noalias() = A * G;
            else if (!ta && tb)
                GB.noalias() = G.transpose() * A;
            else
                GB.noalias() = G.transpose() * A.transpose();
            EMap<S>(gb.ptr(), bv.dim(0), bv.dim(1)) += GB;
        }
    });
}

template <class S>
Var<S> transpose(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2) throw Error("transpose: rank-2 tensor required");
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    return make_op_node<S>(std::move(out), {a}, [m, n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g({m, n});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g.at(i, j) = self.grad.at(j, i);
        self.parents[0]->accumulate(g);
    });
}

template <class S>
Var<S> reshape(const Var<S>& a, std::vector<int> shape) {
    if (Tensor<S>::count(shape) != a.val().numel()) throw Error("reshape: element count mismatch");
    Tensor<S> out(shape, a.val().data);
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g(self.parents[0]->value.shape, self.grad.data);
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// slicing / concatenation

template <class S>
Var<S> slice_cols(const Var<S>& a, int c0, int len) {
    const auto& av = a.val();
    if (av.rank() != 2) throw Error("slice_cols: rank-2 tensor required");
    const int m = av.dim(0), n = av.dim(1);
    if (c0 < 0 || c0 + len > n) throw Error("slice_cols: out of range");
    Tensor<S> out({m, len});
    for (int i = 0; i < m; ++i)
        std::copy(av.ptr() + static_cast<size_t>(i) * n + c0,
                  av.ptr() + static_cast<size_t>(i) * n + c0 + len,
                  out.ptr() + static_cast<size_t>(i) * len);
    return make_op_node<S>(std::move(out), {a}, [c0, len, m, n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& ga = self.parents[0]->grad_buffer();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < len; ++j) ga.at(i, c0 + j) += self.grad.at(i, j);
    });
}

template <class S>
Var<S> slice_rows(const Var<S>& a, int r0, int len) {
    const auto& av = a.val();
    if (av.rank() != 2) throw Error("slice_rows: rank-2 tensor required");
    const int m = av.dim(0), n = av.dim(1);
    if (r0 < 0 || r0 + len > m) throw Error("slice_rows: out of range");
    Tensor<S> out({len, n});
    std::copy(av.ptr() + static_cast<size_t>(r0) * n, av.ptr() + static_cast<size_t>(r0 + len) * n,
              out.ptr());
    return make_op_node<S>(std::move(out), {a}, [r0, len, n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& ga = self.parents[0]->grad_buffer();
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < n; ++j) ga.at(r0 + i, j) += self.grad.at(i, j);
    });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw Error("concat_cols: empty input");
    const int m = parts[0].val().dim(0);
    int n = 0;
    for (const auto& p : parts) {
        if (p.val().rank() != 2 || p.val().dim(0) != m) throw Error("concat_cols: shape mismatch");
        n += p.val().dim(1);
    }
    Tensor<S> out({m, n});
    std::vector<int> offs;
    int off = 0;
    for (const auto& p : parts) {
        offs.push_back(off);
        const int pn = p.val().dim(1);
        for (int i = 0; i < m; ++i)
            std::copy(p.val().ptr() + static_cast<size_t>(i) * pn,
                      p.val().ptr() + static_cast<size_t>(i + 1) * pn,
                      out.ptr() + static_cast<size_t>(i) * n + off);
        off += pn;
    }
    return make_op_node<S>(std::move(out), parts, [offs, m, n](Node<S>& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            if (!self.parents[k]->requires_grad) continue;
            auto& gp = self.parents[k]->grad_buffer();
            const int pn = gp.dim(1);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < pn; ++j) gp.at(i, j) += self.grad.at(i, offs[k] + j);
        }
    });
}

// Concatenate rank-3 tensors along the channel axis.
template <class S>
Var<S> concat_ch(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw Error("concat_ch: empty input");
    const int h = parts[0].val().dim(1), w = parts[0].val().dim(2);
    int c = 0;
    for (const auto& p : parts) {
        if (p.val().rank() != 3 || p.val().dim(1) != h || p.val().dim(2) != w)
            throw Error("concat_ch: shape mismatch");
        c += p.val().dim(0);
    }
    Tensor<S> out({c, h, w});
    std::vector<int> offs;
    int off = 0;
    for (const auto& p : parts) {
        offs.push_back(off);
        std::copy(p.val().data.begin(), p.val().data.end(),
                  out.data.begin() + static_cast<size_t>(off) * h * w);
        off += p.val().dim(0);
    }
    return make_op_node<S>(std::move(out), parts, [offs, h, w](Node<S>& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
            if (!self.parents[k]->requires_grad) continue;
            auto& gp = self.parents[k]->grad_buffer();
            const size_t n = gp.data.size();
            const S* src = self.grad.ptr() + static_cast<size_t>(offs[k]) * h * w;
            for (size_t i = 0; i < n; ++i) gp.data[i] += src[i];
        }
    });
}

// Extract element i of a flat tensor as a scalar Var.
template <class S>
Var<S> select(const Var<S>& a, int i) {
    if (i < 0 || i >= a.val().numel()) throw Error("select: index out of range");
    return make_op_node<S>(Tensor<S>::scalar(a.val().data[i]), {a}, [i](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& ga = self.parents[0]->grad_buffer();
        ga.data[static_cast<size_t>(i)] += self.grad.data[0];
    });
}

template <class S>
Var<S> stack_scalars(const std::vector<Var<S>>& xs) {
    Tensor<S> out({static_cast<int>(xs.size())});
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].val().numel() != 1) throw Error("stack_scalars: non-scalar input");
        out.data[i] = xs[i].val().data[0];
    }
    return make_op_node<S>(std::move(out), xs, [](Node<S>& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            if (!self.parents[i]->requires_grad) continue;
            auto& gp = self.parents[i]->grad_buffer();
            gp.data[0] += self.grad.data[i];
        }
    });
}

// ---------------------------------------------------------------------------
// broadcast helpers

// (M,N) + (N) row vector.
template <class S>
Var<S> add_rowvec(const Var<S>& a, const Var<S>& v) {
    const auto& av = a.val();
    if (av.rank() != 2 || v.val().numel() != av.dim(1)) throw Error("add_rowvec: shape mismatch");
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out = av;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += v.val().data[static_cast<size_t>(j)];
    return make_op_node<S>(std::move(out), {a, v}, [m, n](Node<S>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            auto& gv = self.parents[1]->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gv.data[static_cast<size_t>(j)] += self.grad.at(i, j);
        }
    });
}

// Scale each row i of (M,N) by vec[i].
template <class S>
Var<S> scale_rows(const Var<S>& a, const Var<S>& v) {
    const auto& av = a.val();
    if (av.rank() != 2 || v.val().numel() != av.dim(0)) throw Error("scale_rows: shape mismatch");
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out = av;
    for (int i = 0; i < m; ++i) {
        const S s = v.val().data[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) out.at(i, j) *= s;
    }
    return make_op_node<S>(std::move(out), {a, v}, [m, n](Node<S>& self) {
        const auto& av = self.parents[0]->value;
        const auto& vv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            auto& ga = self.parents[0]->grad_buffer();
            for (int i = 0; i < m; ++i) {
                const S s = vv.data[static_cast<size_t>(i)];
                for (int j = 0; j < n; ++j) ga.at(i, j) += self.grad.at(i, j) * s;
            }
        }
        if (self.parents[1]->requires_grad) {
            auto& gv = self.parents[1]->grad_buffer();
            for (int i = 0; i < m; ++i) {
                S s = 0;
                for (int j = 0; j < n; ++j) s += self.grad.at(i, j) * av.at(i, j);
                gv.data[static_cast<size_t>(i)] += s;
            }
        }
    });
}

// (C,H,W) elementwise-scaled by a (1,H,W) map, broadcast over channels.
template <class S>
Var<S> mul_by_map(const Var<S>& x, const Var<S>& m) {
    const auto& xv = x.val();
    const auto& mv = m.val();
    if (xv.rank() != 3 || mv.rank() != 3 || mv.dim(0) != 1 || mv.dim(1) != xv.dim(1) ||
        mv.dim(2) != xv.dim(2))
        throw Error("mul_by_map: shape mismatch");
    const int c = xv.dim(0);
    const size_t hw = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor<S> out = xv;
    for (int ch = 0; ch < c; ++ch)
        for (size_t i = 0; i < hw; ++i) out.data[ch * hw + i] *= mv.data[i];
    return make_op_node<S>(std::move(out), {x, m}, [c, hw](Node<S>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& mv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor<S> g = self.grad;
            for (int ch = 0; ch < c; ++ch)
                for (size_t i = 0; i < hw; ++i) g.data[ch * hw + i] *= mv.data[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            auto& gm = self.parents[1]->grad_buffer();
            for (int ch = 0; ch < c; ++ch)
                for (size_t i = 0; i < hw; ++i)
                    gm.data[i] += self.grad.data[ch * hw + i] * xv.data[ch * hw + i];
        }
    });
}

// Per-channel bias add on (C,H,W).
template <class S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& b) {
    const auto& xv = x.val();
    if (xv.rank() != 3 || b.val().numel() != xv.dim(0))
        throw Error("add_channel_bias: shape mismatch");
    const int c = xv.dim(0);
    const size_t hw = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor<S> out = xv;
    for (int ch = 0; ch < c; ++ch) {
        const S bv = b.val().data[static_cast<size_t>(ch)];
        for (size_t i = 0; i < hw; ++i) out.data[ch * hw + i] += bv;
    }
    return make_op_node<S>(std::move(out), {x, b}, [c, hw](Node<S>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            auto& gb = self.parents[1]->grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                S s = 0;
                for (size_t i = 0; i < hw; ++i) s += self.grad.data[ch * hw + i];
                gb.data[static_cast<size_t>(ch)] += s;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// normalizations

template <class S>
Var<S> softmax_rows(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2) throw Error("softmax_rows: rank-2 tensor required");
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({m, n});
    for (int i = 0; i < m; ++i) {
        S mx = av.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, av.at(i, j));
        S s = 0;
        for (int j = 0; j < n; ++j) {
            out.at(i, j) = std::exp(av.at(i, j) - mx);
            s += out.at(i, j);
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    Tensor<S> saved = out;
    return make_op_node<S>(std::move(out), {a}, [saved, m, n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g({m, n});
        for (int i = 0; i < m; ++i) {
            S dot = 0;
            for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * saved.at(i, j);
            for (int j = 0; j < n; ++j)
                g.at(i, j) = saved.at(i, j) * (self.grad.at(i, j) - dot);
        }
        self.parents[0]->accumulate(g);
    });
}

// Softmax over the row (channel) axis: each column of (K,N) becomes a simplex.
template <class S>
Var<S> softmax_cols(const Var<S>& a) {
    const auto& av = a.val();
    if (av.rank() != 2) throw Error("softmax_cols: rank-2 tensor required");
    const int m = av.dim(0), n = av.dim(1);
    Tensor<S> out({m, n});
    for (int j = 0; j < n; ++j) {
        S mx = av.at(0, j);
        for (int i = 1; i < m; ++i) mx = std::max(mx, av.at(i, j));
        S s = 0;
        for (int i = 0; i < m; ++i) {
            out.at(i, j) = std::exp(av.at(i, j) - mx);
            s += out.at(i, j);
        }
        for (int i = 0; i < m; ++i) out.at(i, j) /= s;
    }
    Tensor<S> saved = out;
    return make_op_node<S>(std::move(out), {a}, [saved, m, n](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<S> g({m, n});
        for (int j = 0; j < n; ++j) {
            S dot = 0;
            for (int i = 0; i < m; ++i) dot += self.grad.at(i, j) * saved.at(i, j);
            for (int i = 0; i < m; ++i)
                g.at(i, j) = saved.at(i, j) * (self.grad.at(i, j) - dot);
        }
        self.parents[0]->accumulate(g);
    });
}

// LayerNorm across each row of (M,N) with learned affine.
template <class S>
Var<S> layer_norm_rows(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                       S eps = S(1e-5)) {
    const auto& xv = x.val();
    if (xv.rank() != 2) throw Error("layer_norm_rows: rank-2 tensor required");
    const int m = xv.dim(0), n = xv.dim(1);
    if (gamma.val().numel() != n || beta.val().numel() != n)
        throw Error("layer_norm_rows: affine shape mismatch");
    Tensor<S> out({m, n});
    Tensor<S> xhat({m, n});
    Tensor<S> istd({m});
    for (int i = 0; i < m; ++i) {
        S mu = 0;
        for (int j = 0; j < n; ++j) mu += xv.at(i, j);
        mu /= static_cast<S>(n);
        S var = 0;
        for (int j = 0; j < n; ++j) {
            const S d = xv.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<S>(n);
        const S is = S(1) / std::sqrt(var + eps);
        istd.data[static_cast<size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            xhat.at(i, j) = (xv.at(i, j) - mu) * is;
            out.at(i, j) = xhat.at(i, j) * gamma.val().data[static_cast<size_t>(j)] +
                           beta.val().data[static_cast<size_t>(j)];
        }
    }
    return make_op_node<S>(
        std::move(out), {x, gamma, beta}, [xhat, istd, m, n](Node<S>& self) {
            const auto& gv = self.parents[1]->value;
            if (self.parents[0]->requires_grad) {
                Tensor<S> gx({m, n});
                for (int i = 0; i < m; ++i) {
                    S sum_dxh = 0, sum_dxh_xh = 0;
                    for (int j = 0; j < n; ++j) {
                        const S dxh = self.grad.at(i, j) * gv.data[static_cast<size_t>(j)];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xhat.at(i, j);
                    }
                    const S is = istd.data[static_cast<size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                        const S dxh = self.grad.at(i, j) * gv.data[static_cast<size_t>(j)];
                        gx.at(i, j) = is * (dxh - sum_dxh / static_cast<S>(n) -
                                            xhat.at(i, j) * sum_dxh_xh / static_cast<S>(n));
                    }
                }
                self.parents[0]->accumulate(gx);
            }
            if (self.parents[1]->requires_grad) {
                auto& gg = self.parents[1]->grad_buffer();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gg.data[static_cast<size_t>(j)] += self.grad.at(i, j) * xhat.at(i, j);
            }
            if (self.parents[2]->requires_grad) {
                auto& gb = self.parents[2]->grad_buffer();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gb.data[static_cast<size_t>(j)] += self.grad.at(i, j);
            }
        });
}

// InstanceNorm on (C,H,W): normalize each channel over its spatial extent.
template <class S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     S eps = S(1e-5)) {
    const auto& xv = x.val();
    if (xv.rank() != 3) throw Error("instance_norm: rank-3 tensor required");
    const int c = xv.dim(0);
    const int hw = xv.dim(1) * xv.dim(2);
    if (gamma.val().numel() != c || beta.val().numel() != c)
        throw Error("instance_norm: affine shape mismatch");
    Tensor<S> out(xv.shape);
    Tensor<S> xhat(xv.shape);
    Tensor<S> istd({c});
    for (int ch = 0; ch < c; ++ch) {
        const S* xs = xv.ptr() + static_cast<size_t>(ch) * hw;
        S mu = 0;
        for (int i = 0; i < hw; ++i) mu += xs[i];
        mu /= static_cast<S>(hw);
        S var = 0;
        for (int i = 0; i < hw; ++i) {
            const S d = xs[i] - mu;
            var += d * d;
        }
        var /= static_cast<S>(hw);
        const S is = S(1) / std::sqrt(var + eps);
        istd.data[static_cast<size_t>(ch)] = is;
        S* xh = xhat.ptr() + static_cast<size_t>(ch) * hw;
        S* os = out.ptr() + static_cast<size_t>(ch) * hw;
        const S g = gamma.val().data[static_cast<size_t>(ch)];
        const S b = beta.val().data[static_cast<size_t>(ch)];
        for (int i = 0; i < hw; ++i) {
            xh[i] = (xs[i] - mu) * is;
            os[i] = xh[i] * g + b;
        }
    }
    return make_op_node<S>(
        std::move(out), {x, gamma, beta}, [xhat, istd, c, hw](Node<S>& self) {
            const auto& gv = self.parents[1]->value;
            if (self.parents[0]->requires_grad) {
                Tensor<S> gx(self.parents[0]->value.shape);
                for (int ch = 0; ch < c; ++ch) {
                    const S* gd = self.grad.ptr() + static_cast<size_t>(ch) * hw;
                    const S* xh = xhat.ptr() + static_cast<size_t>(ch) * hw;
                    const S g = gv.data[static_cast<size_t>(ch)];
                    S sum_dxh = 0, sum_dxh_xh = 0;
                    for (int i = 0; i < hw; ++i) {
                        const S dxh = gd[i] * g;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[i];
                    }
                    const S is = istd.data[static_cast<size_t>(ch)];
                    S* gxs = gx.ptr() + static_cast<size_t>(ch) * hw;
                    for (int i = 0; i < hw; ++i) {
                        const S dxh = gd[i] * g;
                        gxs[i] = is * (dxh - sum_dxh / static_cast<S>(hw) -
                                       xh[i] * sum_dxh_xh / static_cast<S>(hw));
                    }
                }
                self.parents[0]->accumulate(gx);
            }
            if (self.parents[1]->requires_grad) {
                auto& gg = self.parents[1]->grad_buffer();
                for (int ch = 0; ch < c; ++ch) {
                    const S* gd = self.grad.ptr() + static_cast<size_t>(ch) * hw;
                    const S* xh = xhat.ptr() + static_cast<size_t>(ch) * hw;
                    S s = 0;
                    for (int i = 0; i < hw; ++i) s += gd[i] * xh[i];
                    gg.data[static_cast<size_t>(ch)] += s;
                }
            }
            if (self.parents[2]->requires_grad) {
                auto& gb = self.parents[2]->grad_buffer();
                for (int ch = 0; ch < c; ++ch) {
                    const S* gd = self.grad.ptr() + static_cast<size_t>(ch) * hw;
                    S s = 0;
                    for (int i = 0; i < hw; ++i) s += gd[i];
                    gb.data[static_cast<size_t>(ch)] += s;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// convolution and spatial ops

namespace detail {

// im2col for (C,H,W) -> (C*kh*kw, OH*OW); zero padding.
template <class S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            Tensor<S>& col) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    S* cp = col.ptr();
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    S* dst = cp + static_cast<size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, S(0));
                        continue;
                    }
                    const S* row = x.ptr() + (static_cast<size_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? row[ix] : S(0);
                    }
                }
                cp += static_cast<size_t>(oh) * ow;
            }
        }
    }
}

template <class S>
void col2im_add(const Tensor<S>& col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor<S>& gx) {
    const S* cp = col.ptr();
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    const S* src = cp + static_cast<size_t>(oy) * ow;
                    if (iy >= 0 && iy < h) {
                        S* row = gx.ptr() + (static_cast<size_t>(ch) * h + iy) * w;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < w) row[ix] += src[ox];
                        }
                    }
                }
                cp += static_cast<size_t>(oh) * ow;
            }
        }
    }
}

}  // namespace detail

// conv2d on (C,H,W) with weights (O,C,kh,kw) and bias (O). The im2col buffer
// is rebuilt in the backward pass instead of being stored.
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
    const auto& xv = x.val();
    const auto& wv = w.val();
    if (xv.rank() != 3 || wv.rank() != 4) throw Error("conv2d: bad ranks");
    const int c = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int o = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != c) throw Error("conv2d: channel mismatch");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw Error("conv2d: empty output");
    Tensor<S> col({c * kh * kw, oh * ow});
    detail::im2col(xv, kh, kw, stride, pad, oh, ow, col);
    // As in matmul, products and reductions run on Eigen-owned copies so the
    // kernels' accumulation order is a function of shape alone.
    Tensor<S> out({o, oh, ow});
    {
        const EMat<S> W = ECMap<S>(wv.ptr(), o, c * kh * kw);
        const EMat<S> Cm = ECMap<S>(col.ptr(), c * kh * kw, oh * ow);
        EMat<S> O(o, oh * ow);
        O.noalias() = W * Cm;
        for (int i = 0; i < o; ++i) O.row(i).array() += b.val().data[static_cast<size_t>(i)];
        EMap<S>(out.ptr(), o, oh * ow) = O;
    }
    return make_op_node<S>(
        std::move(out), {x, w, b}, [c, h, wd, o, kh, kw, stride, pad, oh, ow](Node<S>& self) {
            const auto& xv = self.parents[0]->value;
            const auto& wv = self.parents[1]->value;
            const EMat<S> G = ECMap<S>(self.grad.ptr(), o, oh * ow);
            const bool need_x = self.parents[0]->requires_grad;
            const bool need_w = self.parents[1]->requires_grad;
            if (need_w) {
                Tensor<S> col({c * kh * kw, oh * ow});
                detail::im2col(xv, kh, kw, stride, pad, oh, ow, col);
                auto& gw = self.parents[1]->grad_buffer();
                const EMat<S> Cm = ECMap<S>(col.ptr(), c * kh * kw, oh * ow);
                EMat<S> GW(o, c * kh * kw);
                GW.noalias() = G * Cm.transpose();
                EMap<S>(gw.ptr(), o, c * kh * kw) += GW;
            }
            if (self.parents[2]->requires_grad) {
                auto& gb = self.parents[2]->grad_buffer();
                for (int i = 0; i < o; ++i) gb.data[static_cast<size_t>(i)] += G.row(i).sum();
            }
            if (need_x) {
                Tensor<S> gcol({c * kh * kw, oh * ow});
                const EMat<S> W = ECMap<S>(wv.ptr(), o, c * kh * kw);
                EMat<S> GC(c * kh * kw, oh * ow);
                GC.noalias() = W.transpose() * G;
                EMap<S>(gcol.ptr(), c * kh * kw, oh * ow) = GC;
                auto& gx = self.parents[0]->grad_buffer();
                detail::col2im_add(gcol, c, h, wd, kh, kw, stride, pad, oh, ow, gx);
            }
        });
}

template <class S>
Var<S> avg_pool2(const Var<S>& x) {
    const auto& xv = x.val();
    if (xv.rank() != 3) throw Error("avg_pool2: rank-3 tensor required");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (h % 2 || w % 2) throw Error("avg_pool2: odd spatial size");
    const int oh = h / 2, ow = w / 2;
    Tensor<S> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                out.at(ch, y, xx) =
                    (xv.at(ch, 2 * y, 2 * xx) + xv.at(ch, 2 * y, 2 * xx + 1) +
                     xv.at(ch, 2 * y + 1, 2 * xx) + xv.at(ch, 2 * y + 1, 2 * xx + 1)) *
                    S(0.25);
    return make_op_node<S>(std::move(out), {x}, [c, oh, ow](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& gx = self.parents[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const S g = self.grad.at(ch, y, xx) * S(0.25);
                    gx.at(ch, 2 * y, 2 * xx) += g;
                    gx.at(ch, 2 * y, 2 * xx + 1) += g;
                    gx.at(ch, 2 * y + 1, 2 * xx) += g;
                    gx.at(ch, 2 * y + 1, 2 * xx + 1) += g;
                }
    });
}

template <class S>
Var<S> upsample_nearest2(const Var<S>& x) {
    const auto& xv = x.val();
    if (xv.rank() != 3) throw Error("upsample_nearest2: rank-3 tensor required");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor<S> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const S v = xv.at(ch, y, xx);
                out.at(ch, 2 * y, 2 * xx) = v;
                out.at(ch, 2 * y, 2 * xx + 1) = v;
                out.at(ch, 2 * y + 1, 2 * xx) = v;
                out.at(ch, 2 * y + 1, 2 * xx + 1) = v;
            }
    return make_op_node<S>(std::move(out), {x}, [c, h, w](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& gx = self.parents[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    gx.at(ch, y, xx) += self.grad.at(ch, 2 * y, 2 * xx) +
                                        self.grad.at(ch, 2 * y, 2 * xx + 1) +
                                        self.grad.at(ch, 2 * y + 1, 2 * xx) +
                                        self.grad.at(ch, 2 * y + 1, 2 * xx + 1);
    });
}

template <class S>
Var<S> global_avg_pool(const Var<S>& x) {
    const auto& xv = x.val();
    if (xv.rank() != 3) throw Error("global_avg_pool: rank-3 tensor required");
    const int c = xv.dim(0);
    const int hw = xv.dim(1) * xv.dim(2);
    Tensor<S> out({c});
    for (int ch = 0; ch < c; ++ch) {
        S s = 0;
        const S* p = xv.ptr() + static_cast<size_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) s += p[i];
        out.data[static_cast<size_t>(ch)] = s / static_cast<S>(hw);
    }
    return make_op_node<S>(std::move(out), {x}, [c, hw](Node<S>& self) {
        if (!self.parents[0]->requires_grad) return;
        auto& gx = self.parents[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch) {
            const S g = self.grad.data[static_cast<size_t>(ch)] / static_cast<S>(hw);
            S* p = gx.ptr() + static_cast<size_t>(ch) * hw;
            for (int i = 0; i < hw; ++i) p[i] += g;
        }
    });
}

// Bilinear sampling of (C,H,W) at an absolute sampling grid (H2,W2,2) holding
// normalized coordinates with half-pixel centers: grid[...,0]=x in [-1,1]
// maps to column x_px = (x+1)*W/2 - 1/2, grid[...,1]=y likewise to rows.
// With power-of-two W the px -> norm -> px round trip is exact in binary
// float, so an identity grid reproduces the input bitwise. Out-of-bounds
// taps read 0. Differentiable in both the source grid values and the
// sampling grid.
template <class S>
Var<S> grid_sample(const Var<S>& x, const Var<S>& grid) {
    const auto& xv = x.val();
    const auto& gv = grid.val();
    if (xv.rank() != 3 || gv.rank() != 3 || gv.dim(2) != 2) throw Error("grid_sample: bad shapes");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int h2 = gv.dim(0), w2 = gv.dim(1);
    Tensor<S> out({c, h2, w2});
    const S sx = static_cast<S>(w) / S(2);
    const S sy = static_cast<S>(h) / S(2);
    auto sample = [&](int ch, int iy, int ix) -> S {
        if (iy < 0 || iy >= h || ix < 0 || ix >= w) return S(0);
        return xv.at(ch, iy, ix);
    };
    for (int oy = 0; oy < h2; ++oy) {
        for (int ox = 0; ox < w2; ++ox) {
            const size_t gi = (static_cast<size_t>(oy) * w2 + ox) * 2;
            const S xf = (gv.data[gi] + S(1)) * sx - S(0.5);
            const S yf = (gv.data[gi + 1] + S(1)) * sy - S(0.5);
            const int x0 = static_cast<int>(std::floor(xf));
            const int y0 = static_cast<int>(std::floor(yf));
            const S fx = xf - static_cast<S>(x0);
            const S fy = yf - static_cast<S>(y0);
            for (int ch = 0; ch < c; ++ch) {
                const S v00 = sample(ch, y0, x0);
                const S v01 = sample(ch, y0, x0 + 1);
                const S v10 = sample(ch, y0 + 1, x0);
                const S v11 = sample(ch, y0 + 1, x0 + 1);
                out.at(ch, oy, ox) = (S(1) - fy) * ((S(1) - fx) * v00 + fx * v01) +
                                     fy * ((S(1) - fx) * v10 + fx * v11);
            }
        }
    }
    return make_op_node<S>(std::move(out), {x, grid}, [c, h, w, h2, w2](Node<S>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& gv = self.parents[1]->value;
        const S sx = static_cast<S>(w) / S(2);
        const S sy = static_cast<S>(h) / S(2);
        const bool need_x = self.parents[0]->requires_grad;
        const bool need_g = self.parents[1]->requires_grad;
        Tensor<S>* gx = need_x ? &self.parents[0]->grad_buffer() : nullptr;
        Tensor<S>* gg = need_g ? &self.parents[1]->grad_buffer() : nullptr;
        auto inb = [&](int iy, int ix) { return iy >= 0 && iy < h && ix >= 0 && ix < w; };
        auto val = [&](int ch, int iy, int ix) -> S {
            return inb(iy, ix) ? xv.at(ch, iy, ix) : S(0);
        };
        for (int oy = 0; oy < h2; ++oy) {
            for (int ox = 0; ox < w2; ++ox) {
                const size_t gi = (static_cast<size_t>(oy) * w2 + ox) * 2;
                const S xf = (gv.data[gi] + S(1)) * sx - S(0.5);
                const S yf = (gv.data[gi + 1] + S(1)) * sy - S(0.5);
                const int x0 = static_cast<int>(std::floor(xf));
                const int y0 = static_cast<int>(std::floor(yf));
                const S fx = xf - static_cast<S>(x0);
                const S fy = yf - static_cast<S>(y0);
                S dxf = 0, dyf = 0;
                for (int ch = 0; ch < c; ++ch) {
                    const S g = self.grad.at(ch, oy, ox);
                    if (g == S(0)) continue;
                    if (need_x) {
                        if (inb(y0, x0)) gx->at(ch, y0, x0) += g * (S(1) - fy) * (S(1) - fx);
                        if (inb(y0, x0 + 1)) gx->at(ch, y0, x0 + 1) += g * (S(1) - fy) * fx;
                        if (inb(y0 + 1, x0)) gx->at(ch, y0 + 1, x0) += g * fy * (S(1) - fx);
                        if (inb(y0 + 1, x0 + 1)) gx->at(ch, y0 + 1, x0 + 1) += g * fy * fx;
                    }
                    if (need_g) {
                        const S v00 = val(ch, y0, x0), v01 = val(ch, y0, x0 + 1);
                        const S v10 = val(ch, y0 + 1, x0), v11 = val(ch, y0 + 1, x0 + 1);
                        dxf += g * ((S(1) - fy) * (v01 - v00) + fy * (v11 - v10));
                        dyf += g * ((S(1) - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                }
                if (need_g) {
                    gg->data[gi] += dxf * sx;
                    gg->data[gi + 1] += dyf * sy;
                }
            }
        }
    });
}

// Constant (non-trainable) leaf.
template <class S>
Var<S> constant(Tensor<S> t) {
    return Var<S>(std::move(t), false);
}

}  // namespace chromo::nn
