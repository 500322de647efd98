#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "core/layers.hpp"

namespace chromo::nn {

// Adam with per-parameter moment slots keyed by parameter name, so optimizer
// state survives checkpoint round trips independent of registration order.
// Parameters that are frozen (requires_grad off) or received no gradient this
// step are skipped entirely, including their moment updates.
template <class S>
class Adam {
public:
    Adam() = default;
    Adam(S beta1, S beta2, S eps = S(1e-8)) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<std::pair<std::string, Var<S>>>& params, S lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
        for (const auto& [name, p] : params) {
            if (!p.requires_grad() || !p.has_grad()) continue;
            const Tensor<S>& g = p.grad();
            auto& slot = slots_[name];
            if (slot.m.numel() == 0) {
                slot.m = Tensor<S>::zeros(p.val().shape);
                slot.v = Tensor<S>::zeros(p.val().shape);
            }
            Tensor<S>& pv = p.val_mut();
            for (size_t i = 0; i < pv.data.size(); ++i) {
                const S gi = g.data[i];
                slot.m.data[i] = beta1_ * slot.m.data[i] + (S(1) - beta1_) * gi;
                slot.v.data[i] = beta2_ * slot.v.data[i] + (S(1) - beta2_) * gi * gi;
                const S mhat = slot.m.data[i] / static_cast<S>(bc1);
                const S vhat = slot.v.data[i] / static_cast<S>(bc2);
                pv.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }
    void set_steps(int64_t t) { t_ = t; }
    S beta1() const { return beta1_; }
    S beta2() const { return beta2_; }

    struct Slot {
        Tensor<S> m, v;
    };
    const std::map<std::string, Slot>& slots() const { return slots_; }
    void set_slot(const std::string& name, Tensor<S> m, Tensor<S> v) {
        slots_[name] = Slot{std::move(m), std::move(v)};
    }

private:
    S beta1_ = S(0.5), beta2_ = S(0.999), eps_ = S(1e-8);
    int64_t t_ = 0;
    std::map<std::string, Slot> slots_;
};

// Multi-step decay: lr(epoch) = base * gamma^(#milestones passed), with
// 0-indexed epochs so the new rate takes effect at the milestone epoch itself.
template <class S>
S multistep_lr(S base, const std::vector<int>& milestones, S gamma, int epoch) {
    int k = 0;
    for (int m : milestones)
        if (epoch >= m) ++k;
    return base * static_cast<S>(std::pow(static_cast<double>(gamma), k));
}

}  // namespace chromo::nn
