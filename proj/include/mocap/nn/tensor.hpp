#pragma once

// Define-by-run reverse-mode differentiation over dense 64-bit matrices.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a backward closure; backward()
// walks the recorded graph in reverse topological order. Column vectors are
// n x 1 matrices and scalars are 1 x 1.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mocap/error.hpp"

namespace mocap::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace detail {

struct Node {
    Matrix value;
    Matrix grad; // empty until something flows into it
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g) {
        if (grad.size() == 0)
            grad = g;
        else
            grad += g;
    }
    template <class Expr>
    void accumulate_expr(const Expr& g) {
        if (grad.size() == 0)
            grad = g;
        else
            grad += g;
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<detail::Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Index rows, Index cols = 1) { return Tensor(Matrix::Zero(rows, cols)); }
    static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }
    static Tensor vector(std::initializer_list<double> values) {
        Matrix m(static_cast<Index>(values.size()), 1);
        Index i = 0;
        for (double v : values) m(i++, 0) = v;
        return Tensor(std::move(m));
    }
    static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

    bool defined() const { return static_cast<bool>(node_); }
    const Matrix& value() const { return node_->value; }
    // Direct storage access for optimizers and initializers; not recorded.
    Matrix& mutable_value() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }
    bool has_grad() const { return node_->grad.size() != 0; }
    Matrix grad() const {
        if (!has_grad()) return Matrix::Zero(rows(), cols());
        return node_->grad;
    }
    void zero_grad() { node_->grad.resize(0, 0); }

    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    Index size() const { return node_->value.size(); }
    std::vector<Index> shape() const { return {rows(), cols()}; }
    double item() const {
        if (size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on a non-scalar tensor");
        return node_->value(0, 0);
    }

    // Same value, cut from the graph.
    Tensor detach() const { return Tensor(node_->value); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Builds the result of an operation; records the edge only when needed.
    static Tensor from_op(Matrix value, std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
        Tensor out(std::move(value));
        if (!detail::grad_mode()) return out;
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (!any) return out;
        auto& node = *out.node_;
        node.requires_grad = true;
        node.leaf = false;
        node.inputs.reserve(inputs.size());
        for (auto& in : inputs) node.inputs.push_back(in.node_);
        node.backward = std::move(backward);
        return out;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

// Populates dLoss/dLeaf on every leaf reachable from the scalar loss.
// Leaf gradients accumulate across calls until zero_grad().
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw Error(ErrorCode::NonScalarLoss, "backward() needs a 1x1 loss");
    if (!loss.requires_grad()) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* node : order)
        if (!node->leaf) node->grad.resize(0, 0);
    loss.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->leaf || !node->backward || node->grad.size() == 0) continue;
        node->backward(*node);
    }
}

} // namespace mocap::nn
