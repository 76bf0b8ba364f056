#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace lfm {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Thread-local switch: when disabled, ops do not record backward closures.
struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on first use; same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // pulls this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

// Dense row-major tensor. Value semantics over a shared node so that autodiff
// closures and Params can alias the same storage. Values are immutable once an
// op has consumed the tensor; gradient buffers are the only mutable state.
template <typename T>
class Tensor {
  public:
    using Scalar = T;

    Tensor() = default;

    explicit Tensor(Shape shape) : node_(std::make_shared<TensorNode<T>>()) {
        validate_shape(shape);
        node_->shape = std::move(shape);
        node_->value.assign(shape_numel(node_->shape), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<TensorNode<T>>()) {
        validate_shape(shape);
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(data);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    T* ptr() { return node_->value.data(); }
    const T* ptr() const { return node_->value.data(); }

    T item() const {
        if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
        return node_->value[0];
    }

    // Row-major element access for tests and small-scale code.
    T& at(std::initializer_list<int> idx) { return node_->value[offset(idx)]; }
    T at(std::initializer_list<int> idx) const { return node_->value[offset(idx)]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg = true) {
        node_->requires_grad = rg;
        return *this;
    }

    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad_view() const { return node_->grad; }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

  private:
    std::shared_ptr<TensorNode<T>> node_;

    static void validate_shape(const Shape& s) {
        for (int e : s)
            if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_str(s));
    }

    size_t offset(std::initializer_list<int> idx) const {
        const Shape& s = node_->shape;
        if (idx.size() != s.size()) throw std::invalid_argument("at: rank mismatch");
        size_t off = 0;
        size_t i = 0;
        for (int v : idx) {
            if (v < 0 || v >= s[i]) throw std::out_of_range("at: index out of range");
            off = off * static_cast<size_t>(s[i]) + static_cast<size_t>(v);
            ++i;
        }
        return off;
    }
};

// Wraps the result of a differentiable op: attaches parents and the backward
// closure only when some input tracks gradients and grad mode is on.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backprop) {
    Tensor<T> out(std::move(shape), std::move(value));
    bool needs = false;
    if (GradMode::enabled())
        for (const auto& in : inputs)
            if (in.defined() && in.requires_grad()) needs = true;
    if (needs) {
        out.set_requires_grad(true);
        auto node = out.node();
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs)
            if (in.defined()) node->parents.push_back(in.node());
        node->backprop = std::move(backprop);
    }
    return out;
}

// Reverse accumulation from a scalar loss. Topological order is reverse
// DFS-postorder over parents, so every node is processed after all of its
// consumers have deposited gradient.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss.requires_grad())
        throw std::logic_error("backward: no recorded computation (forward not run with gradients)");

    using NodeT = TensorNode<T>;
    std::vector<NodeT*> order;
    std::vector<std::pair<NodeT*, size_t>> stack;
    std::unordered_set<const void*> visited_set;

    stack.push_back({loss.node().get(), 0});
    visited_set.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            NodeT* p = node->parents[child].get();
            ++child;
            if (p->requires_grad && !visited_set.count(p)) {
                visited_set.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// Seeded uniform init helper shared by layers.
template <typename T>
void fill_uniform(std::vector<T>& v, T lo, T hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& x : v) x = static_cast<T>(dist(rng));
}

}  // namespace lfm
