#pragma once

// Central finite-difference oracle for the autodiff engine. Independent of
// the backward closures: it only perturbs leaf values and re-evaluates.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mocap/nn/layers.hpp"

namespace mocap::testkit {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Compares backward() against (f(x+h) - f(x-h)) / 2h for every entry of every
// tensor in `leaves` (or at most `max_entries` evenly strided entries each).
inline GradCheckResult gradcheck(std::vector<std::pair<std::string, nn::Tensor>> leaves,
                                 const std::function<nn::Tensor()>& loss_fn, double h = 1e-5,
                                 std::size_t max_entries = 0) {
    for (auto& [name, t] : leaves) t.zero_grad();
    nn::Tensor loss = loss_fn();
    nn::backward(loss);
    std::vector<nn::Matrix> analytic;
    for (auto& [name, t] : leaves) analytic.push_back(t.grad());

    GradCheckResult result;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto& [name, t] = leaves[k];
        const auto n = static_cast<std::size_t>(t.size());
        const std::size_t stride = (max_entries == 0 || n <= max_entries) ? 1 : (n + max_entries - 1) / max_entries;
        for (std::size_t i = 0; i < n; i += stride) {
            double& x = t.mutable_value().data()[i];
            const double saved = x;
            x = saved + h;
            const double up = [&] { nn::NoGradGuard g; return loss_fn().item(); }();
            x = saved - h;
            const double down = [&] { nn::NoGradGuard g; return loss_fn().item(); }();
            x = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = relative_error(analytic[k].data()[i], numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[k].data()[i]) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

inline GradCheckResult gradcheck(nn::ParamStore& store, const std::function<nn::Tensor()>& loss_fn, double h = 1e-5,
                                 std::size_t max_entries = 0) {
    return gradcheck(store.entries(), loss_fn, h, max_entries);
}

} // namespace mocap::testkit
