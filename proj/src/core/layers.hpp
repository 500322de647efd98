#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"

// Parameter registry + the small set of trainable layers the models are
// assembled from. Parameters are registered under hierarchical dotted names
// ("gen.enc1.w"), which is also the key space of the optimizer state and the
// checkpoint container.

namespace chromo::nn {

template <class S>
class ParamRegistry {
public:
    Var<S> add(const std::string& name, Tensor<S> init) {
        if (index_.count(name)) throw Error("duplicate parameter: " + name);
        Var<S> v = Var<S>::leaf(std::move(init), true);
        index_.emplace(name, params_.size());
        params_.emplace_back(name, v);
        return v;
    }

    const std::vector<std::pair<std::string, Var<S>>>& items() const { return params_; }

    Var<S> get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter: " + name);
        return params_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    void zero_grads() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    void set_requires_grad(bool on) {
        for (auto& [name, p] : params_) p.set_requires_grad(on);
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [name, p] : params_) n += p.val().numel();
        return n;
    }

private:
    std::vector<std::pair<std::string, Var<S>>> params_;
    std::map<std::string, size_t> index_;
};

namespace init {

// He-style normal init, optionally rescaled (scale=0 gives exact zeros for
// heads that must start inert).
template <class S>
Tensor<S> he_normal(std::vector<int> shape, int fan_in, Rng& rng, double scale = 1.0) {
    Tensor<S> t(std::move(shape));
    const double std = scale * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<S>(rng.normal() * std);
    return t;
}

template <class S>
Tensor<S> normal(std::vector<int> shape, double std, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.normal() * std);
    return t;
}

}  // namespace init

template <class S>
struct Conv2d {
    Var<S> w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamRegistry<S>& reg, const std::string& name, int in_ch, int out_ch, int k,
           int stride_, int pad_, Rng& rng, double scale = 1.0)
        : stride(stride_), pad(pad_) {
        w = reg.add(name + ".w",
                    init::he_normal<S>({out_ch, in_ch, k, k}, in_ch * k * k, rng, scale));
        b = reg.add(name + ".b", Tensor<S>::zeros({out_ch}));
    }

    Var<S> forward(const Var<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <class S>
struct Linear {
    Var<S> w, b;  // w: (in, out) so forward is x @ w + b

    Linear() = default;
    Linear(ParamRegistry<S>& reg, const std::string& name, int in_dim, int out_dim, Rng& rng,
           double scale = 1.0) {
        w = reg.add(name + ".w", init::he_normal<S>({in_dim, out_dim}, in_dim, rng, scale));
        b = reg.add(name + ".b", Tensor<S>::zeros({out_dim}));
    }

    Var<S> forward(const Var<S>& x) const { return add_rowvec(matmul(x, w), b); }
};

template <class S>
struct LayerNorm {
    Var<S> gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamRegistry<S>& reg, const std::string& name, int dim) {
        gamma = reg.add(name + ".g", Tensor<S>::full({dim}, S(1)));
        beta = reg.add(name + ".b", Tensor<S>::zeros({dim}));
    }

    Var<S> forward(const Var<S>& x) const { return layer_norm_rows(x, gamma, beta); }
};

template <class S>
struct InstanceNorm {
    Var<S> gamma, beta;

    InstanceNorm() = default;
    InstanceNorm(ParamRegistry<S>& reg, const std::string& name, int ch) {
        gamma = reg.add(name + ".g", Tensor<S>::full({ch}, S(1)));
        beta = reg.add(name + ".b", Tensor<S>::zeros({ch}));
    }

    Var<S> forward(const Var<S>& x) const { return instance_norm(x, gamma, beta); }
};

}  // namespace chromo::nn
