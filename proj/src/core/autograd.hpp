#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "core/tensor.hpp"

namespace chromo::nn {

// Reverse-mode autodiff on a dynamically recorded tape. Nodes own their
// value; gradients are allocated lazily on first accumulation. The graph is
// a DAG of shared_ptrs from consumers to producers, so a whole step's graph
// is released once the root Var goes out of scope.

template <class S>
struct Node;

template <class S>
using NodePtr = std::shared_ptr<Node<S>>;

template <class S>
struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    // requires_grad: gradient must be propagated to/through this node. For
    // leaves it marks trainable parameters; for interior nodes it is the OR
    // over parents, fixed at construction time.
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<NodePtr<S>> parents;
    // Accumulates into parents' grads given this node's grad.
    std::function<void(Node<S>&)> backward_fn;

    void accumulate(const Tensor<S>& g) {
        if (!grad_ready) {
            grad = Tensor<S>::zeros(value.shape);
            grad_ready = true;
        }
        const size_t n = grad.data.size();
        for (size_t i = 0; i < n; ++i) grad.data[i] += g.data[i];
    }

    Tensor<S>& grad_buffer() {
        if (!grad_ready) {
            grad = Tensor<S>::zeros(value.shape);
            grad_ready = true;
        }
        return grad;
    }
};

// Global gradient-recording switch (single-threaded engine).
inline bool& grad_mode() {
    static bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

template <class S>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<S> value, bool requires_grad = false) : n_(std::make_shared<Node<S>>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
    }

    static Var leaf(Tensor<S> value, bool requires_grad = false) {
        return Var(std::move(value), requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    Node<S>* node() const { return n_.get(); }
    const NodePtr<S>& node_ptr() const { return n_; }

    // Var is a shared handle onto its node (pointer semantics), so node
    // mutators are usable through const handles.
    const Tensor<S>& val() const { return n_->value; }
    Tensor<S>& val_mut() const { return n_->value; }
    const std::vector<int>& shape() const { return n_->value.shape; }
    int dim(int i) const { return n_->value.dim(i); }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool b) const { n_->requires_grad = b; }

    const Tensor<S>& grad() const { return n_->grad; }
    bool has_grad() const { return n_->grad_ready; }
    void zero_grad() const {
        n_->grad_ready = false;
        n_->grad = Tensor<S>();
    }

    S item() const {
        if (n_->value.numel() != 1) throw Error("item() on non-scalar");
        return n_->value.data[0];
    }

    // New leaf sharing nothing with the recorded graph.
    Var detach() const { return Var(n_->value, false); }

    // Backpropagate from a scalar root; seeds d(root)/d(root) = 1.
    void backward() const {
        if (n_->value.numel() != 1) throw Error("backward() needs a scalar root");
        std::vector<Node<S>*> order;
        topo_sort(order);
        n_->accumulate(Tensor<S>::scalar(S(1)));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<S>* nd = *it;
            if (nd->backward_fn && nd->grad_ready) nd->backward_fn(*nd);
        }
    }

private:
    NodePtr<S> n_;

    // Iterative DFS post-order over nodes that participate in the backward pass.
    void topo_sort(std::vector<Node<S>*>& order) const {
        std::unordered_set<Node<S>*> seen;
        std::vector<std::pair<Node<S>*, size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [nd, idx] = stack.back();
            if (idx < nd->parents.size()) {
                Node<S>* p = nd->parents[idx].get();
                ++idx;
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(nd);
                stack.pop_back();
            }
        }
    }
};

// Helper used by every op: build the output node and wire the tape when
// any input needs gradients and recording is on.
template <class S>
Var<S> make_op_node(Tensor<S> value, std::vector<Var<S>> inputs,
                    std::function<void(Node<S>&)> backward_fn) {
    bool track = grad_mode();
    if (track) {
        bool any = false;
        for (const auto& v : inputs) any = any || v.requires_grad();
        track = any;
    }
    Var<S> out(std::move(value), track);
    if (track) {
        auto* nd = out.node();
        nd->parents.reserve(inputs.size());
        for (auto& v : inputs) nd->parents.push_back(v.node_ptr());
        nd->backward_fn = std::move(backward_fn);
    }
    return out;
}

}  // namespace chromo::nn
