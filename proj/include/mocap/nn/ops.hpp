#pragma once

// Differentiable primitives. Each op computes its value eagerly and, when any
// input requires gradients, records a closure that maps the output gradient
// onto its inputs.

#include <cmath>
#include <string>
#include <vector>

#include "mocap/nn/tensor.hpp"

namespace mocap::nn {

namespace detail {

inline void check(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

inline std::string dims(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

// Builds the message only on failure; shape checks run on every op.
inline void check_shapes(bool ok, const char* op, const Tensor& a, const Tensor& b, const char* joint) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, std::string(op) + " " + dims(a) + " " + joint + " " + dims(b));
}

inline void flow(Node& self, std::size_t i, const Matrix& g) {
    if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(g);
}

template <class Expr>
inline void flow_expr(Node& self, std::size_t i, const Expr& g) {
    if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate_expr(g);
}

inline bool wants(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_shapes(a.cols() == b.rows(), "matmul", a, b, "by");
    return Tensor::from_op(a.value() * b.value(), {a, b}, [](detail::Node& self) {
        if (detail::wants(self, 0)) detail::flow_expr(self, 0, self.grad * self.inputs[1]->value.transpose());
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, self.inputs[0]->value.transpose() * self.grad);
    });
}

// Elementwise sum; a column vector b broadcasts across the columns of a.
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) {
        return Tensor::from_op(a.value() + b.value(), {a, b}, [](detail::Node& self) {
            detail::flow(self, 0, self.grad);
            detail::flow(self, 1, self.grad);
        });
    }
    detail::check_shapes(a.rows() == b.rows() && b.cols() == 1, "add", a, b, "and");
    Matrix v = a.value().colwise() + b.value().col(0);
    return Tensor::from_op(std::move(v), {a, b}, [](detail::Node& self) {
        detail::flow(self, 0, self.grad);
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, self.grad.rowwise().sum());
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_shapes(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b, "and");
    return Tensor::from_op(a.value() - b.value(), {a, b}, [](detail::Node& self) {
        detail::flow(self, 0, self.grad);
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, -self.grad);
    });
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_shapes(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b, "and");
    return Tensor::from_op(a.value().cwiseProduct(b.value()), {a, b}, [](detail::Node& self) {
        if (detail::wants(self, 0)) detail::flow_expr(self, 0, self.grad.cwiseProduct(self.inputs[1]->value));
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, self.grad.cwiseProduct(self.inputs[0]->value));
    });
}

inline Tensor scale(const Tensor& a, double s) {
    return Tensor::from_op(a.value() * s, {a}, [s](detail::Node& self) { detail::flow_expr(self, 0, self.grad * s); });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return Tensor::from_op((a.value().array() + s).matrix(), {a}, [](detail::Node& self) { detail::flow(self, 0, self.grad); });
}

inline Tensor tanh(const Tensor& a) {
    Matrix v = a.value().array().tanh().matrix();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, (self.grad.array() * (1.0 - self.value.array().square())).matrix());
    });
}

inline Tensor sigmoid(const Tensor& a) {
    Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
    });
}

// log(sigmoid(a)) = -softplus(-a), evaluated without overflow.
inline Tensor log_sigmoid(const Tensor& a) {
    const auto& x = a.value().array();
    Matrix v = (x.min(0.0) - (-x.abs()).exp().log1p()).matrix();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        const auto& x = self.inputs[0]->value.array();
        // d/dx log sigmoid(x) = 1 - sigmoid(x) = sigmoid(-x)
        detail::flow_expr(self, 0, (self.grad.array() / (1.0 + x.exp())).matrix());
    });
}

inline Tensor exp(const Tensor& a) {
    Matrix v = a.value().array().exp().matrix();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, self.grad.cwiseProduct(self.value));
    });
}

inline Tensor log(const Tensor& a) {
    Matrix v = a.value().array().log().matrix();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, self.grad.cwiseQuotient(self.inputs[0]->value));
    });
}

inline Tensor square(const Tensor& a) {
    return Tensor::from_op(a.value().cwiseAbs2(), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, 2.0 * self.grad.cwiseProduct(self.inputs[0]->value));
    });
}

inline Tensor sqrt(const Tensor& a) {
    Matrix v = a.value().cwiseSqrt();
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, (0.5 * self.grad.array() / self.value.array()).matrix());
    });
}

// Column-wise softmax.
inline Tensor softmax(const Tensor& a) {
    Matrix v = a.value();
    for (Index c = 0; c < v.cols(); ++c) {
        auto col = v.col(c);
        col.array() = (col.array() - col.maxCoeff()).exp();
        col /= col.sum();
    }
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        Matrix g(self.value.rows(), self.value.cols());
        for (Index c = 0; c < g.cols(); ++c) {
            const double dot = self.grad.col(c).dot(self.value.col(c));
            g.col(c) = self.value.col(c).cwiseProduct((self.grad.col(c).array() - dot).matrix());
        }
        detail::flow(self, 0, g);
    });
}

// Column-wise log-softmax.
inline Tensor log_softmax(const Tensor& a) {
    Matrix v = a.value();
    for (Index c = 0; c < v.cols(); ++c) {
        auto col = v.col(c);
        const double m = col.maxCoeff();
        const double lse = m + std::log((col.array() - m).exp().sum());
        col.array() -= lse;
    }
    return Tensor::from_op(std::move(v), {a}, [](detail::Node& self) {
        Matrix g(self.value.rows(), self.value.cols());
        for (Index c = 0; c < g.cols(); ++c) {
            const double total = self.grad.col(c).sum();
            g.col(c) = self.grad.col(c) - (self.value.col(c).array().exp() * total).matrix();
        }
        detail::flow(self, 0, g);
    });
}

// Vertical stack.
inline Tensor concat(const std::vector<Tensor>& parts) {
    detail::check(!parts.empty(), "concat of nothing");
    Index rows = 0;
    const Index cols = parts.front().cols();
    for (const auto& p : parts) {
        detail::check(p.cols() == cols, "concat column mismatch");
        rows += p.rows();
    }
    Matrix v(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return Tensor::from_op(std::move(v), parts, [](detail::Node& self) {
        Index at = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const Index r = self.inputs[i]->value.rows();
            if (detail::wants(self, i)) detail::flow_expr(self, i, self.grad.middleRows(at, r));
            at += r;
        }
    });
}

// Horizontal stack.
inline Tensor hstack(const std::vector<Tensor>& parts) {
    detail::check(!parts.empty(), "hstack of nothing");
    Index cols = 0;
    const Index rows = parts.front().rows();
    for (const auto& p : parts) {
        detail::check(p.rows() == rows, "hstack row mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return Tensor::from_op(std::move(v), parts, [](detail::Node& self) {
        Index at = 0;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            const Index c = self.inputs[i]->value.cols();
            if (detail::wants(self, i)) detail::flow_expr(self, i, self.grad.middleCols(at, c));
            at += c;
        }
    });
}

// Rows [start, start + count).
inline Tensor slice(const Tensor& a, Index start, Index count) {
    detail::check(start >= 0 && count >= 0 && start + count <= a.rows(), "slice rows out of range");
    return Tensor::from_op(a.value().middleRows(start, count), {a}, [start, count](detail::Node& self) {
        auto& in = *self.inputs[0];
        if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
        in.grad.middleRows(start, count) += self.grad;
    });
}

// Columns [start, start + count).
inline Tensor cols(const Tensor& a, Index start, Index count) {
    detail::check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice columns out of range");
    return Tensor::from_op(a.value().middleCols(start, count), {a}, [start, count](detail::Node& self) {
        auto& in = *self.inputs[0];
        if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
        in.grad.middleCols(start, count) += self.grad;
    });
}

inline Tensor col(const Tensor& a, Index j) { return cols(a, j, 1); }
inline Tensor pick(const Tensor& a, Index i) { return slice(a, i, 1); }

inline Tensor transpose(const Tensor& a) {
    return Tensor::from_op(a.value().transpose(), {a}, [](detail::Node& self) {
        detail::flow_expr(self, 0, self.grad.transpose());
    });
}

inline Tensor sum(const Tensor& a) {
    return Tensor::from_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](detail::Node& self) {
        const auto& in = self.inputs[0]->value;
        detail::flow_expr(self, 0, Matrix::Constant(in.rows(), in.cols(), self.grad(0, 0)));
    });
}

// Sum across columns: rows x cols -> rows x 1.
inline Tensor sum_cols(const Tensor& a) {
    return Tensor::from_op(a.value().rowwise().sum(), {a}, [](detail::Node& self) {
        const Index n = self.inputs[0]->value.cols();
        detail::flow_expr(self, 0, self.grad.replicate(1, n));
    });
}

inline Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.size());
    return Tensor::from_op(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](detail::Node& self) {
        const auto& in = self.inputs[0]->value;
        detail::flow_expr(self, 0, Matrix::Constant(in.rows(), in.cols(), self.grad(0, 0) / n));
    });
}

// Elementwise minimum; ties route the gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
    detail::check_shapes(a.rows() == b.rows() && a.cols() == b.cols(), "minimum", a, b, "and");
    return Tensor::from_op(a.value().cwiseMin(b.value()), {a, b}, [](detail::Node& self) {
        const auto& av = self.inputs[0]->value.array();
        const auto& bv = self.inputs[1]->value.array();
        const auto first = (av <= bv);
        if (detail::wants(self, 0)) detail::flow_expr(self, 0, first.select(self.grad.array(), 0.0).matrix());
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, first.select(0.0, self.grad.array()).matrix());
    });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// -log softmax(logits)[k] for a column of logits.
inline Tensor nll_from_logits(const Tensor& logits, int k) {
    detail::check(logits.cols() == 1 && k >= 0 && k < logits.rows(), "class index out of range");
    return -pick(log_softmax(logits), k);
}

// 1/2 ||a - b||^2
inline Tensor half_squared_error(const Tensor& a, const Tensor& b) { return 0.5 * sum(square(a - b)); }

} // namespace mocap::nn
