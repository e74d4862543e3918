// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tiedaug/models.hpp"
#include "tiedaug/rng.hpp"

namespace tiedaug {

// Numerical checks that the Gaussian-noise tied penalty E||h(x) - h(x+eps)||^2,
// eps ~ N(0, sigma^2 I), behaves like the Tikhonov term sigma^2 ||J_h(x)||_F^2,
// and that the cosine variant deviates from 1 at order sigma^2.

/// Throws ConfigError unless the model's activation is smooth (tanh or identity).
void require_smooth(const Model& model);

/// Feature Jacobian dh/dx at a single input, F×n row-major (one backward per feature).
std::vector<double> feature_jacobian(const Model& model, std::span<const double> x);

/// ||dh/dx||_F^2 at a single input.
double jacobian_frobenius_sq(const Model& model, std::span<const double> x);

struct McEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

/// Plain Monte-Carlo mean of ||h(x) - h(x + eps)||^2 over `samples` fresh draws,
/// with unclamped noise.
McEstimate mc_tied_gaussian_penalty(const Model& model, std::span<const double> x, double sigma,
                                    std::size_t samples, Rng& rng);

struct TaylorCheckConfig {
    std::vector<double> sigmas{1e-3, 1e-2, 1e-1};
    std::size_t samples = 10000;  // noise draws per (probe, sigma)
    std::size_t probe_points = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TaylorRow {
    std::size_t probe_index = 0;
    double sigma = 0.0;
    double mc_estimate = 0.0;
    double std_error = 0.0;
    double taylor_prediction = 0.0;  // sigma^2 * ||J||_F^2
    double relative_gap = 0.0;       // |mc - taylor| / taylor
};

struct TaylorCheckReport {
    std::vector<TaylorRow> rows;   // probe-major, sigmas in the configured order
    bool affine_model = false;
    /// Affine models: every gap within 3 standard errors (plus a 1e-12 relative
    /// rounding floor). Otherwise: each probe's gap is nondecreasing in sigma.
    bool consistent = false;
};

/// Estimator used per (probe, sigma): antithetic pairs +-sigma*z with the first-order
/// term sigma^2 ||J z||^2 as a control variate,
///   mc = sigma^2 ||J||_F^2 + mean_pairs[(d(+z) + d(-z))/2 - sigma^2 ||J z||^2],
/// which is unbiased for E||h(x+eps) - h(x)||^2. The same z draws are reused across
/// the sigma sweep for a given probe so the sweep compares like with like.
TaylorCheckReport taylor_check(const Model& model, const Tensor& probes, const TaylorCheckConfig& cfg);

struct CosineCheckRow {
    double sigma = 0.0;
    double mc_cosine_mean = 0.0;            // E[cos(h(x), h(x + eps))]
    double predicted_constant_term = 1.0;   // zeroth-order term of the expansion
    double residual = 0.0;                  // predicted_constant_term - mc_cosine_mean
    double std_error = 0.0;
};

/// Precondition ||h(x)|| >= 1e-6 (ContractError otherwise).
CosineCheckRow cosine_expansion_check(const Model& model, std::span<const double> x, double sigma,
                                      std::size_t samples, Rng& rng);

struct CosineSweep {
    std::vector<CosineCheckRow> rows;
    double loglog_slope = 0.0;  // least-squares slope of log(residual) against log(sigma)
};

/// Runs cosine_expansion_check over `sigmas` with common noise draws.
CosineSweep cosine_sweep(const Model& model, std::span<const double> x, std::span<const double> sigmas,
                         std::size_t samples, std::uint64_t seed);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace tiedaug
