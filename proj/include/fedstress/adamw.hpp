#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedstress/errors.hpp"
#include "fedstress/param_set.hpp"

namespace fedstress {

template <typename T>
struct AdamWHyper {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    T weight_decay = T(1e-5);
};

// Per-parameter first/second moments, keyed by parameter name so the state
// survives round-to-round reuse regardless of entry order.
template <typename T>
struct AdamWState {
    int64_t step_count = 0;
    AdamWHyper<T> hyper;
    std::unordered_map<std::string, std::vector<T>> first_moment;
    std::unordered_map<std::string, std::vector<T>> second_moment;
};

// Decoupled weight decay: the decay term scales the parameter directly and
// never passes through the moment estimates.
template <typename T>
void adamw_step(ParameterSet<T>& params, AdamWState<T>& state) {
    state.step_count += 1;
    const auto& h = state.hyper;
    const T bc1 = T(1) - std::pow(h.beta1, static_cast<T>(state.step_count));
    const T bc2 = T(1) - std::pow(h.beta2, static_cast<T>(state.step_count));

    for (auto& e : params) {
        if (!e.trainable) continue;
        auto& theta = e.tensor.data;
        const auto& g = e.tensor.grad;
        if (g.size() != theta.size())
            throw ShapeError("adamw_step: gradient missing or mis-shaped for " + e.name);

        auto& m = state.first_moment[e.name];
        auto& v = state.second_moment[e.name];
        if (m.empty()) m.assign(theta.size(), T(0));
        if (v.empty()) v.assign(theta.size(), T(0));
        if (m.size() != theta.size() || v.size() != theta.size())
            throw ShapeError("adamw_step: moment shape mismatch for " + e.name);

        for (size_t i = 0; i < theta.size(); ++i) {
            const T gi = g[i];
            if (!std::isfinite(static_cast<double>(gi)))
                throw RuntimeFailure("adamw_step: non-finite gradient in " + e.name);
            m[i] = h.beta1 * m[i] + (T(1) - h.beta1) * gi;
            v[i] = h.beta2 * v[i] + (T(1) - h.beta2) * gi * gi;
            const T m_hat = m[i] / bc1;
            const T v_hat = v[i] / bc2;
            theta[i] = theta[i] - h.lr * h.weight_decay * theta[i] -
                       h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
        }
    }
}

}  // namespace fedstress
