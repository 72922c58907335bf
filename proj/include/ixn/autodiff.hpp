// SPDX-License-Identifier: Apache-2.0

#ifndef IXN_AUTODIFF_HPP
#define IXN_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <unordered_set>

#include "ixn/tensor.hpp"

namespace ixn {

template <class T>
class Value;

template <class T>
struct Node {
    Tensor<T> data;
    Tensor<T> grad; // allocated on first accumulation during backward
    bool requires_grad = false;
    std::vector<Value<T>> parents;
    std::function<void(Node<T>&)> backprop; // reads this->grad, accumulates into parents

    Tensor<T>& ensure_grad() {
        if (grad.empty() && data.numel() > 0) grad = Tensor<T>::zeros(data.shape());
        return grad;
    }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

// RAII guard disabling graph recording (inference mode).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

// Handle to a node in the reverse-mode graph. Cheap to copy; the underlying
// buffer is shared. Data is immutable by convention once consumed by an op,
// except for optimizer updates and BN running-stat buffers.
template <class T>
class Value {
public:
    using Scalar = T;

    Value() = default;
    explicit Value(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    // Leaf from a tensor; trainable leaves participate in backward.
    static Value leaf(Tensor<T> t, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->data = std::move(t);
        n->requires_grad = requires_grad && detail::grad_enabled;
        return Value(std::move(n));
    }
    static Value constant(Tensor<T> t) { return leaf(std::move(t), false); }
    static Value scalar(T v, bool requires_grad = false) {
        return leaf(Tensor<T>::scalar(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->data.shape(); }
    int64_t numel() const { return node_->data.numel(); }
    size_t rank() const { return node_->data.rank(); }
    int64_t dim(size_t i) const { return node_->data.dim(i); }

    const Tensor<T>& tensor() const { return node_->data; }
    Tensor<T>& tensor() { return node_->data; }
    std::span<const T> data() const { return node_->data.data(); }
    std::span<T> data() { return node_->data.data(); }
    T item() const { return node_->data.item(); }

    bool requires_grad() const { return node_->requires_grad; }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& grad() { return node_->grad; }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(T(0));
    }

    Value detach() const { return constant(node_->data); }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Create an op result node. Records parents and the backward closure only
// when grad mode is on and some parent needs gradients.
template <class T>
Value<T> make_op(Tensor<T> out, std::vector<Value<T>> parents,
                 std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->data = std::move(out);
    bool need = false;
    if (detail::grad_enabled)
        for (const auto& p : parents)
            if (p.requires_grad()) need = true;
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Value<T>(std::move(n));
}

// Reverse-mode sweep from a scalar root. Deterministic: the traversal order
// is fixed by graph construction order.
template <class T>
void backward(const Value<T>& root) {
    if (root.numel() != 1)
        throw ShapeError(strcat_("backward() requires a scalar root, got shape ",
                                 shape_str(root.shape())));
    if (!root.requires_grad()) return;

    // iterative DFS topological sort
    std::vector<Node<T>*> topo;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node(), 0});
    seen.insert(root.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next_parent++].node();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

} // namespace ixn

#endif // IXN_AUTODIFF_HPP
