#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "core/errors.hpp"

namespace chromo {

// Dense row-major tensor. Kept deliberately plain: shape + flat storage.
// Rank is small (<= 4) everywhere in this codebase.
template <class S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> sh) : shape(std::move(sh)) {
        data.assign(static_cast<size_t>(count(shape)), S(0));
    }
    Tensor(std::vector<int> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != count(shape))
            throw Error("tensor: data size does not match shape");
    }

    static int64_t count(const std::vector<int>& sh) {
        int64_t n = 1;
        for (int d : sh) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> sh) { return Tensor(std::move(sh)); }

    static Tensor full(std::vector<int> sh, S v) {
        Tensor t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // 2-d / 3-d accessors for readability in op kernels.
    S& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const S& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }
    S& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const S& at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

}  // namespace chromo
