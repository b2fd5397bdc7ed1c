#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cloudfusion/error.hpp"

namespace cloudfusion {

/// (batch, channels, height, width). Scalars are 1x1x1x1.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

namespace detail {

inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

/// Disables graph recording for its lifetime (evaluation, pool bookkeeping).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Reference-semantics handle on a node of the autodiff graph. Copies share
/// storage; use clone() or detach() for an independent value.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        node_->shape = shape;
        node_->data.assign(shape.numel(), fill);
        node_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        if (values.size() != shape.numel()) {
            throw DimensionError("tensor: shape " + shape.str() + " needs " +
                                 std::to_string(shape.numel()) + " values, got " +
                                 std::to_string(values.size()));
        }
        node_->shape = shape;
        node_->data = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return Tensor(Shape{1, 1, 1, 1}, v, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->data.size(); }

    // Handle semantics: constness of the handle does not extend to the storage.
    std::span<T> data() const { return node_->data; }
    std::vector<T>& values() const { return node_->data; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<T> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() const { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    T item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
        return node_->data[0];
    }

    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        const Shape& s = node_->shape;
        return node_->data[((n * s.c + c) * s.h + y) * s.w + x];
    }
    T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        const Shape& s = node_->shape;
        return node_->data[((n * s.c + c) * s.h + y) * s.w + x];
    }

    /// Same values, no graph history, no gradient tracking.
    Tensor detach() const { return Tensor(shape(), node_->data, false); }
    Tensor clone() const { return Tensor(shape(), node_->data, requires_grad()); }

    const NodePtr& node() const { return node_; }
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(node_->data.begin(), node_->data.end());
        return Tensor<U>(shape(), std::move(out), requires_grad());
    }

    /// Internal: builds a graph node from parents and a backward closure. The
    /// closure receives the finished node (with grad populated) and must add into
    /// parents' grads.
    static Tensor make_result(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                              std::function<void(detail::Node<T>&)> backward) {
        Tensor out(shape, std::move(values));
        if (!grad_enabled()) return out;
        bool needs = false;
        for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
        if (!needs) return out;
        out.node_->requires_grad = true;
        for (auto& in : inputs) {
            if (in.defined()) out.node_->parents.push_back(in.node_);
        }
        out.node_->backward_fn = std::move(backward);
        return out;
    }

private:
    NodePtr node_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
/// every reachable node that requires them.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    using NodePtr = std::shared_ptr<detail::Node<T>>;
    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            for (const NodePtr& p : node->parents) {
                if (p->requires_grad) p->ensure_grad();
            }
            node->backward_fn(*node);
        }
    }
}

/// Kind tags drive weight initialization.
enum class ParamKind { Weight, Bias, NormScale, NormShift, Buffer };

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
    ParamKind kind = ParamKind::Weight;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

}  // namespace cloudfusion
