// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/optim.hpp"

#include <cmath>
#include <numbers>

#include "tiedaug/errors.hpp"
#include "tiedaug/log.hpp"

namespace tiedaug {

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "cosine") return ScheduleKind::cosine;
    if (name == "step") return ScheduleKind::step;
    throw ConfigError("unknown schedule '" + name + "'");
}

void SgdConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("optim: learning rate must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim: momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("optim: weight decay must be >= 0");
    if (schedule == ScheduleKind::step && !(factor > 0.0)) throw ConfigError("optim: step factor must be > 0");
}

double SgdConfig::rate(std::size_t step_index) const {
    switch (schedule) {
        case ScheduleKind::constant:
            return learning_rate;
        case ScheduleKind::cosine: {
            if (total_steps == 0 || step_index >= total_steps) return 0.0;
            const double t = static_cast<double>(step_index) / static_cast<double>(total_steps);
            return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        }
        case ScheduleKind::step: {
            double lr = learning_rate;
            for (std::size_t m : milestones)
                if (step_index >= m) lr *= factor;
            return lr;
        }
    }
    return learning_rate;
}

Sgd::Sgd(SgdConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Sgd::step(std::vector<Parameter>& params, std::size_t step_index) {
    if (velocity_.empty()) {
        for (const auto& p : params) velocity_.emplace_back(p.value.numel(), 0.0);
    }
    if (velocity_.size() != params.size())
        throw ContractError("Sgd::step: parameter list changed between steps");
    const double lr = cfg_.rate(step_index);
    const double beta = cfg_.momentum;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k].value;
        if (!p.has_grad()) throw ContractError("Sgd::step: parameter '" + params[k].name + "' has no gradient");
        auto theta = p.mutable_data();
        auto g = p.grad();
        auto& v = velocity_[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            theta[i] -= lr * cfg_.weight_decay * theta[i];
            v[i] = beta * v[i] + g[i];
            theta[i] -= cfg_.nesterov ? lr * (g[i] + beta * v[i]) : lr * v[i];
        }
    }
}

void SamConfig::validate() const {
    if (!(rho > 0.0)) throw ConfigError("sam: rho must be > 0");
}

std::vector<std::vector<double>> collect_gradients(const std::vector<Parameter>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        if (p.value.has_grad()) {
            out.emplace_back(p.value.grad().begin(), p.value.grad().end());
        } else {
            out.emplace_back(p.value.numel(), 0.0);
        }
    }
    return out;
}

void zero_gradients(std::vector<Parameter>& params) {
    for (auto& p : params) p.value.zero_grad();
}

SamStepResult sam_step(std::vector<Parameter>& params, const SamObjective& objective, const SamConfig& cfg,
                       Sgd& sgd, std::size_t step_index) {
    cfg.validate();
    SamStepResult result;

    zero_gradients(params);
    const double ascent_sign = cfg.first_step == TiedFirstStep::negated ? -1.0 : 1.0;
    backward(objective(ascent_sign).total);
    result.first_gradient = collect_gradients(params);

    double sq = 0.0;
    for (const auto& g : result.first_gradient)
        for (double v : g) sq += v * v;
    result.gradient_norm = std::sqrt(sq);

    std::vector<std::vector<double>> saved;
    saved.reserve(params.size());
    for (const auto& p : params) saved.emplace_back(p.value.data().begin(), p.value.data().end());

    if (result.gradient_norm == 0.0) {
        result.degenerate = true;
        log_warning("sam_step: zero ascent gradient, skipping perturbation");
    } else {
        const double s = cfg.rho / result.gradient_norm;
        double moved = 0.0;
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto theta = params[k].value.mutable_data();
            for (std::size_t i = 0; i < theta.size(); ++i) {
                theta[i] += s * result.first_gradient[k][i];
                const double d = theta[i] - saved[k][i];
                moved += d * d;
            }
        }
        result.perturbation_norm = std::sqrt(moved);
    }

    zero_gradients(params);
    TiedLoss second = objective(1.0);
    backward(second.total);
    result.breakdown = second.breakdown;
    result.second_gradient = collect_gradients(params);

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto theta = params[k].value.mutable_data();
        std::copy(saved[k].begin(), saved[k].end(), theta.begin());
    }
    sgd.step(params, step_index);
    return result;
}

}  // namespace tiedaug
