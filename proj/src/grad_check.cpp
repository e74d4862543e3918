// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tiedaug/errors.hpp"

namespace tiedaug {

double grad_check(const std::function<Tensor()>& objective, std::span<Tensor> inputs, double step) {
    if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
    for (Tensor& t : inputs) {
        if (!t.requires_grad()) throw ContractError("grad_check: input is not a requires_grad leaf");
        t.zero_grad();
    }
    backward(objective());

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const Tensor& t : inputs) {
        if (t.has_grad()) {
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        } else {
            analytic.emplace_back(t.numel(), 0.0);  // unreachable from the loss
        }
    }

    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = objective().item();
            values[i] = saved - step;
            const double down = objective().item();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double err = std::fabs(analytic[k][i] - fd) / std::max(1.0, std::fabs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step) {
    if (!x.requires_grad()) x = Tensor::from(x.shape(), {x.data().begin(), x.data().end()}, true);
    Tensor inputs[] = {x};
    return grad_check([&] { return f(x); }, inputs, step);
}

}  // namespace tiedaug
