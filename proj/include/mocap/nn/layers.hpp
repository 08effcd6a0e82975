#pragma once

// Parameter registry, initializers, dense layers and LSTM cells.
//
// LSTM gates are packed [input, forget, candidate, output] along the 4H
// dimension; this order is part of the checkpoint contract. There are no
// peephole (cell-to-gate) weights.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "mocap/nn/ops.hpp"

namespace mocap::nn {

// Named, insertion-ordered set of learnable tensors.
class ParamStore {
public:
    Tensor& add(const std::string& name, Matrix value) {
        if (index_.count(name)) throw Error(ErrorCode::ConfigInvalid, "duplicate parameter " + name);
        index_[name] = entries_.size();
        entries_.emplace_back(name, Tensor::parameter(std::move(value)));
        return entries_.back().second;
    }
    const Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown parameter " + name);
        return entries_[it->second].second;
    }
    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error(ErrorCode::ConfigInvalid, "unknown parameter " + name);
        return entries_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    void zero_grad() {
        for (auto& [name, t] : entries_) t.zero_grad();
    }
    Index scalar_count() const {
        Index n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }

    // Deep copy of values (fresh leaves, no gradients).
    ParamStore clone() const {
        ParamStore out;
        for (const auto& [name, t] : entries_) out.add(name, t.value());
        return out;
    }
    void copy_values_from(const ParamStore& other) {
        for (auto& [name, t] : entries_) {
            const auto& src = other.get(name).value();
            if (src.rows() != t.rows() || src.cols() != t.cols())
                throw Error(ErrorCode::ShapeMismatch, "parameter " + name + " has a different shape");
            t.mutable_value() = src;
        }
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

// ---- initializers ----------------------------------------------------------

// U[-sqrt(1/fanin), +sqrt(1/fanin)], fanin = number of input columns.
inline Matrix uniform_fanin(Index rows, Index fanin, std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fanin));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, fanin);
    for (Index c = 0; c < fanin; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return m;
}

// Haar-distributed orthonormal n x n matrix (QR of a Gaussian with sign fix).
inline Matrix orthonormal(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix g(n, n);
    for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < n; ++r) g(r, c) = dist(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index i = 0; i < n; ++i)
        if (r(i, i) < 0) q.col(i) *= -1.0;
    return q;
}

// ---- dense -----------------------------------------------------------------

enum class Activation { Identity, Tanh, Sigmoid };

inline Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Identity: break;
    }
    return x;
}

struct Dense {
    Tensor weight; // out x in
    Tensor bias;   // out x 1

    static Dense create(ParamStore& store, const std::string& prefix, Index in, Index out, std::mt19937_64& rng) {
        Dense d;
        d.weight = store.add(prefix + "/W", uniform_fanin(out, in, rng));
        d.bias = store.add(prefix + "/b", Matrix::Zero(out, 1));
        return d;
    }

    Index in_dim() const { return weight.cols(); }
    Index out_dim() const { return weight.rows(); }

    // x may hold one column per sample or time step.
    Tensor operator()(const Tensor& x, Activation act = Activation::Identity) const {
        return activate(add(matmul(weight, x), bias), act);
    }
};

// ---- LSTM ------------------------------------------------------------------

struct LstmCellParams {
    Tensor w_input;  // 4H x I
    Tensor w_hidden; // 4H x H
    Tensor bias;     // 4H x 1

    Index hidden() const { return w_hidden.cols(); }
    Index input() const { return w_input.cols(); }

    static LstmCellParams create(ParamStore& store, const std::string& prefix, Index in, Index hidden, std::mt19937_64& rng) {
        LstmCellParams p;
        p.w_input = store.add(prefix + "/W_input", uniform_fanin(4 * hidden, in, rng));
        Matrix rec(4 * hidden, hidden);
        for (Index g = 0; g < 4; ++g) rec.middleRows(g * hidden, hidden) = orthonormal(hidden, rng);
        p.w_hidden = store.add(prefix + "/W_hidden", std::move(rec));
        Matrix b = Matrix::Zero(4 * hidden, 1);
        b.middleRows(hidden, hidden).setOnes();
        p.bias = store.add(prefix + "/bias", std::move(b));
        return p;
    }
};

struct LstmState {
    Tensor h;
    Tensor c;
};

inline LstmState zero_state(Index hidden) { return {Tensor::zeros(hidden), Tensor::zeros(hidden)}; }

// Fused gate nonlinearities: [sigma(i); sigma(f); tanh(g); sigma(o)] for a 4H x 1
// pre-activation. One graph node instead of four slices and four activations.
inline Tensor lstm_gates(const Tensor& pre) {
    const Index h = pre.rows() / 4;
    Matrix v(pre.rows(), 1);
    const auto& x = pre.value();
    v.topRows(2 * h) = (1.0 / (1.0 + (-x.topRows(2 * h).array()).exp())).matrix();
    v.middleRows(2 * h, h) = x.middleRows(2 * h, h).array().tanh().matrix();
    v.bottomRows(h) = (1.0 / (1.0 + (-x.bottomRows(h).array()).exp())).matrix();
    return Tensor::from_op(std::move(v), {pre}, [h](detail::Node& self) {
        const auto& y = self.value;
        Matrix d(y.rows(), 1);
        d.topRows(2 * h) = (y.topRows(2 * h).array() * (1.0 - y.topRows(2 * h).array())).matrix();
        d.middleRows(2 * h, h) = (1.0 - y.middleRows(2 * h, h).array().square()).matrix();
        d.bottomRows(h) = (y.bottomRows(h).array() * (1.0 - y.bottomRows(h).array())).matrix();
        detail::flow_expr(self, 0, self.grad.cwiseProduct(d));
    });
}

// c = f * c_prev + i * g, reading the activated gates.
inline Tensor lstm_cell_update(const Tensor& gates, const Tensor& c_prev) {
    const Index h = c_prev.rows();
    const auto& a = gates.value();
    Matrix v = a.middleRows(h, h).cwiseProduct(c_prev.value()) + a.topRows(h).cwiseProduct(a.middleRows(2 * h, h));
    return Tensor::from_op(std::move(v), {gates, c_prev}, [h](detail::Node& self) {
        const auto& a = self.inputs[0]->value;
        const auto& cp = self.inputs[1]->value;
        const auto& g = self.grad;
        if (detail::wants(self, 0)) {
            Matrix d = Matrix::Zero(4 * h, 1);
            d.topRows(h) = g.cwiseProduct(a.middleRows(2 * h, h));
            d.middleRows(h, h) = g.cwiseProduct(cp);
            d.middleRows(2 * h, h) = g.cwiseProduct(a.topRows(h));
            self.inputs[0]->accumulate(d);
        }
        if (detail::wants(self, 1)) detail::flow_expr(self, 1, g.cwiseProduct(a.middleRows(h, h)));
    });
}

// h = o * tanh(c).
inline Tensor lstm_hidden(const Tensor& gates, const Tensor& c) {
    const Index h = c.rows();
    const Matrix tc = c.value().array().tanh().matrix();
    Matrix v = gates.value().bottomRows(h).cwiseProduct(tc);
    return Tensor::from_op(std::move(v), {gates, c}, [h, tc](detail::Node& self) {
        const auto& o = self.inputs[0]->value.bottomRows(h);
        const auto& g = self.grad;
        if (detail::wants(self, 0)) {
            Matrix d = Matrix::Zero(4 * h, 1);
            d.bottomRows(h) = g.cwiseProduct(tc);
            self.inputs[0]->accumulate(d);
        }
        if (detail::wants(self, 1))
            detail::flow_expr(self, 1, (g.array() * o.array() * (1.0 - tc.array().square())).matrix());
    });
}

// One step from pre-activations that already include W_input x_t + bias (and
// any extra conditioning terms).
inline LstmState lstm_step_from_projection(const LstmCellParams& p, const Tensor& projected, const LstmState& prev) {
    const Index h = p.hidden();
    detail::check(projected.rows() == 4 * h && projected.cols() == 1, "LSTM projection must be 4H x 1");
    detail::check(prev.h.rows() == h && prev.c.rows() == h, "LSTM state width mismatch");
    const Tensor gates = lstm_gates(add(projected, matmul(p.w_hidden, prev.h)));
    Tensor c = lstm_cell_update(gates, prev.c);
    Tensor hidden = lstm_hidden(gates, c);
    return {std::move(hidden), std::move(c)};
}

inline LstmState lstm_step(const LstmCellParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) {
    detail::check(x.rows() == p.input() && x.cols() == 1, "LSTM input width mismatch");
    return lstm_step_from_projection(p, add(matmul(p.w_input, x), p.bias), {h_prev, c_prev});
}

// Runs a cell across the columns of `inputs` (I x T); returns the hidden state
// at every step in time order. `reverse` processes T-1 .. 0 but still returns
// outputs indexed by original time.
inline std::vector<Tensor> lstm_sequence(const LstmCellParams& p, const Tensor& inputs, bool reverse = false) {
    if (inputs.cols() == 0) throw Error(ErrorCode::EmptySequence, "LSTM over an empty sequence");
    detail::check(inputs.rows() == p.input(), "LSTM input width mismatch");
    const Tensor projected = add(matmul(p.w_input, inputs), p.bias);
    const Index steps = inputs.cols();
    std::vector<Tensor> out(static_cast<std::size_t>(steps));
    LstmState state = zero_state(p.hidden());
    for (Index k = 0; k < steps; ++k) {
        const Index t = reverse ? steps - 1 - k : k;
        state = lstm_step_from_projection(p, col(projected, t), state);
        out[static_cast<std::size_t>(t)] = state.h;
    }
    return out;
}

// Output at t is [h_fwd_t ; h_bwd_t].
inline std::vector<Tensor> bdlstm_layer(const LstmCellParams& forward, const LstmCellParams& backward_cell,
                                        const std::vector<Tensor>& seq) {
    if (seq.empty()) throw Error(ErrorCode::EmptySequence, "bidirectional layer over an empty sequence");
    const Tensor inputs = hstack(seq);
    const auto fwd = lstm_sequence(forward, inputs, false);
    const auto bwd = lstm_sequence(backward_cell, inputs, true);
    std::vector<Tensor> out;
    out.reserve(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) out.push_back(concat({fwd[t], bwd[t]}));
    return out;
}

// Stacked recurrent encoder whose first layer may be bidirectional.
struct RecurrentStack {
    std::vector<LstmCellParams> forward; // one per layer
    LstmCellParams first_backward;
    bool bidirectional_first = true;

    static RecurrentStack create(ParamStore& store, const std::string& prefix, Index in, const std::vector<int>& widths,
                                 bool bidirectional_first, std::mt19937_64& rng) {
        RecurrentStack s;
        s.bidirectional_first = bidirectional_first;
        Index width_in = in;
        for (std::size_t l = 0; l < widths.size(); ++l) {
            const std::string name = prefix + "/layer" + std::to_string(l);
            s.forward.push_back(LstmCellParams::create(store, name + (l == 0 && bidirectional_first ? "/fwd" : ""), width_in, widths[l], rng));
            if (l == 0 && bidirectional_first) {
                s.first_backward = LstmCellParams::create(store, name + "/bwd", width_in, widths[l], rng);
                width_in = 2 * widths[l];
            } else {
                width_in = widths[l];
            }
        }
        return s;
    }

    Index output_dim() const {
        return forward.size() == 1 && bidirectional_first ? 2 * forward[0].hidden() : forward.back().hidden();
    }

    // Top-layer hidden states, one per input column.
    std::vector<Tensor> run(const Tensor& inputs) const {
        if (inputs.cols() == 0) throw Error(ErrorCode::EmptySequence, "recurrent stack over an empty sequence");
        std::vector<Tensor> states;
        Tensor layer_in = inputs;
        for (std::size_t l = 0; l < forward.size(); ++l) {
            if (l == 0 && bidirectional_first) {
                const auto fwd = lstm_sequence(forward[0], layer_in, false);
                const auto bwd = lstm_sequence(first_backward, layer_in, true);
                states.clear();
                for (std::size_t t = 0; t < fwd.size(); ++t) states.push_back(concat({fwd[t], bwd[t]}));
            } else {
                states = lstm_sequence(forward[l], layer_in, false);
            }
            if (l + 1 < forward.size()) layer_in = hstack(states);
        }
        return states;
    }
};

} // namespace mocap::nn
