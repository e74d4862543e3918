// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "tiedaug/tensor.hpp"

namespace tiedaug {

/// Compares reverse-mode gradients against central finite differences.
///
/// `objective` must rebuild the graph on every call (define-by-run) and return a
/// scalar. Each tensor in `inputs` must be a requires_grad leaf; its values are
/// perturbed in place and restored. Returns the max over all coordinates of
/// |autodiff - fd| / max(1, |fd|).
double grad_check(const std::function<Tensor()>& objective, std::span<Tensor> inputs,
                  double step = 1e-5);

/// Single-input convenience form: f(x) scalar.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step = 1e-5);

}  // namespace tiedaug
