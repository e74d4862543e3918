// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tiedaug/models.hpp"
#include "tiedaug/tied_loss.hpp"

namespace tiedaug {

enum class ScheduleKind { constant, cosine, step };

ScheduleKind parse_schedule_kind(const std::string& name);

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    ScheduleKind schedule = ScheduleKind::constant;
    std::vector<std::size_t> milestones;  // step schedule, in optimizer steps
    double factor = 0.1;                  // step schedule decay
    std::size_t total_steps = 0;          // cosine T_max

    void validate() const;
    /// Scheduled learning rate at `step_index` (0-based). Cosine reaches 0 at total_steps.
    double rate(std::size_t step_index) const;
};

/// SGD with decoupled weight decay and (Nesterov) momentum:
///   theta -= lr * wd * theta
///   v = momentum * v + g
///   theta -= lr * (g + momentum * v)   (nesterov)   or   lr * v
class Sgd {
public:
    explicit Sgd(SgdConfig cfg);

    /// Uses the grads stored on each parameter; a parameter without a grad buffer
    /// is a ContractError.
    void step(std::vector<Parameter>& params, std::size_t step_index);

    const SgdConfig& config() const noexcept { return cfg_; }

private:
    SgdConfig cfg_;
    std::vector<std::vector<double>> velocity_;
};

enum class TiedFirstStep { standard, negated };

struct SamConfig {
    double rho = 0.05;
    TiedFirstStep first_step = TiedFirstStep::standard;

    void validate() const;
};

/// Re-evaluable loss over one fixed batch of views. The argument scales the tied
/// weight: +1 for the standard objective, -1 for the negated SAM ascent.
using SamObjective = std::function<TiedLoss(double tied_weight_sign)>;

struct SamStepResult {
    TiedLossBreakdown breakdown;                     // second-step objective
    double gradient_norm = 0.0;                      // global norm of the ascent gradient
    double perturbation_norm = 0.0;                  // measured ||theta_perturbed - theta||
    bool degenerate = false;                         // zero ascent gradient, no perturbation
    std::vector<std::vector<double>> first_gradient;   // per parameter
    std::vector<std::vector<double>> second_gradient;  // per parameter
};

/// One SAM / Tied-SAM update: ascend rho along the normalized first-step gradient
/// (global norm, tied weight negated when configured), take the gradient of the
/// standard objective there, restore the weights bitwise, and apply `sgd` with
/// that gradient.
SamStepResult sam_step(std::vector<Parameter>& params, const SamObjective& objective, const SamConfig& cfg,
                       Sgd& sgd, std::size_t step_index);

/// Flat copy of every parameter gradient (zeros where none).
std::vector<std::vector<double>> collect_gradients(const std::vector<Parameter>& params);
void zero_gradients(std::vector<Parameter>& params);

}  // namespace tiedaug
