#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "fedstress/param_set.hpp"
#include "fedstress/rng.hpp"

namespace fedstress {

// Central finite differences on randomly probed trainable coordinates
// against the analytic gradients already accumulated in `params`. The loss
// callback always receives a fresh copy, so callers may freely run
// train-mode forwards (running-stat updates are discarded with the copy).
// Meant for the 64-bit instantiation.
template <typename T>
double grad_check(const std::function<double(ParameterSet<T>&)>& loss_fn, const ParameterSet<T>& params,
                  int probe_count, double h, uint64_t seed) {
    std::vector<std::pair<size_t, size_t>> coords;  // (entry index, flat offset)
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i].trainable)
            for (size_t j = 0; j < params[i].tensor.numel(); ++j) coords.emplace_back(i, j);

    Rng rng(mix_seed(seed, "grad_check"));
    double max_rel = 0.0;
    for (int p = 0; p < probe_count && !coords.empty(); ++p) {
        const auto [ei, off] = coords[rng.bounded(coords.size())];
        const double analytic = static_cast<double>(params[ei].tensor.grad[off]);

        ParameterSet<T> plus = params;
        plus[ei].tensor.data[off] += static_cast<T>(h);
        const double lp = loss_fn(plus);

        ParameterSet<T> minus = params;
        minus[ei].tensor.data[off] -= static_cast<T>(h);
        const double lm = loss_fn(minus);

        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max(std::abs(fd) + std::abs(analytic), 1e-6);
        max_rel = std::max(max_rel, std::abs(fd - analytic) / denom);
    }
    return max_rel;
}

}  // namespace fedstress
