// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "tiedaug/errors.hpp"

namespace tiedaug {

namespace {

constexpr std::size_t kChunk = 512;

// Running mean/variance (Welford).
class Accumulator {
public:
    void add(double v) {
        ++n_;
        const double d = v - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (v - mean_);
    }
    double mean() const { return mean_; }
    double standard_error() const {
        if (n_ < 2) return 0.0;
        return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

Model frozen_copy(const Model& model) {
    Model copy = model.clone();
    for (auto& p : copy.parameters()) p.value.set_requires_grad(false);
    return copy;
}

void require_input(const Model& model, std::span<const double> x) {
    if (x.size() != model.spec().input_numel())
        throw ContractError("analysis: probe has " + std::to_string(x.size()) + " values, model expects " +
                            std::to_string(model.spec().input_numel()));
}

std::vector<double> features_of(const Model& model, const std::vector<double>& rows, std::size_t count) {
    NoGradGuard no_grad;
    const std::size_t n = model.spec().input_numel();
    const Tensor h = model.features(Tensor::from({count, n}, rows));
    return {h.data().begin(), h.data().end()};
}

double squared_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double norm(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

// 1 - cos(a, b) computed as ||a/|a| - b/|b|||^2 / 2, which keeps precision when
// the angle is tiny.
double one_minus_cosine(const double* a, const double* b, std::size_t n) {
    const double na = norm(a, n), nb = norm(b, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] / na - b[i] / nb;
        s += d * d;
    }
    return 0.5 * s;
}

// Fills `rows` with x + sign·sigma·z for each z in `noise` (count draws of width n).
void perturbed_rows(std::span<const double> x, const std::vector<double>& noise, std::size_t count, double sigma,
                    double sign, std::vector<double>& rows) {
    const std::size_t n = x.size();
    rows.resize(count * n);
    for (std::size_t s = 0; s < count; ++s)
        for (std::size_t i = 0; i < n; ++i) rows[s * n + i] = x[i] + sign * sigma * noise[s * n + i];
}

}  // namespace

void require_smooth(const Model& model) {
    if (model.spec().activation == Activation::relu)
        throw ConfigError("Taylor check requires smooth activations (tanh or identity), model uses relu");
}

std::vector<double> feature_jacobian(const Model& model, std::span<const double> x) {
    require_smooth(model);
    require_input(model, x);
    const Model frozen = frozen_copy(model);
    const std::size_t n = x.size();
    Tensor input = Tensor::from({1, n}, {x.begin(), x.end()}, true);
    const Tensor h = frozen.features(input);
    const std::size_t f = h.dim(1);

    std::vector<double> jac(f * n);
    std::vector<double> selector(f, 0.0);
    for (std::size_t i = 0; i < f; ++i) {
        std::fill(selector.begin(), selector.end(), 0.0);
        selector[i] = 1.0;
        input.zero_grad();
        backward(sum(mul(h, Tensor::from({1, f}, selector))));
        std::copy(input.grad().begin(), input.grad().end(), jac.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return jac;
}

double jacobian_frobenius_sq(const Model& model, std::span<const double> x) {
    double s = 0.0;
    for (double v : feature_jacobian(model, x)) s += v * v;
    return s;
}

McEstimate mc_tied_gaussian_penalty(const Model& model, std::span<const double> x, double sigma,
                                    std::size_t samples, Rng& rng) {
    require_input(model, x);
    if (!(sigma > 0.0)) throw ContractError("mc_tied_gaussian_penalty: sigma must be > 0");
    if (samples == 0) throw ContractError("mc_tied_gaussian_penalty: samples must be >= 1");
    const std::size_t n = x.size();
    const std::vector<double> base = features_of(model, {x.begin(), x.end()}, 1);
    const std::size_t f = base.size();

    Accumulator acc;
    std::vector<double> noise, rows;
    for (std::size_t done = 0; done < samples;) {
        const std::size_t count = std::min(kChunk, samples - done);
        noise.resize(count * n);
        for (double& z : noise) z = standard_normal(rng);
        perturbed_rows(x, noise, count, sigma, 1.0, rows);
        const auto h = features_of(model, rows, count);
        for (std::size_t s = 0; s < count; ++s) acc.add(squared_distance(&h[s * f], base.data(), f));
        done += count;
    }
    return {acc.mean(), acc.standard_error()};
}

void TaylorCheckConfig::validate() const {
    if (sigmas.empty()) throw ConfigError("taylor: at least one sigma is required");
    for (double s : sigmas)
        if (!(s > 0.0)) throw ConfigError("taylor: sigmas must be > 0");
    if (samples < 2) throw ConfigError("taylor: samples must be >= 2");
    if (probe_points < 1) throw ConfigError("taylor: probe_points must be >= 1");
}

TaylorCheckReport taylor_check(const Model& model, const Tensor& probes, const TaylorCheckConfig& cfg) {
    cfg.validate();
    require_smooth(model);
    const std::size_t n = model.spec().input_numel();
    if (probes.rank() < 1 || probes.dim(0) == 0 || probes.numel() / probes.dim(0) != n)
        throw ContractError("taylor_check: probes " + shape_string(probes.shape()) + " do not match the model input");
    const std::size_t probe_count = std::min(cfg.probe_points, probes.dim(0));
    const std::size_t pairs = std::max<std::size_t>(1, cfg.samples / 2);

    TaylorCheckReport report;
    report.affine_model = model.spec().activation == Activation::identity;
    bool consistent = true;

    for (std::size_t p = 0; p < probe_count; ++p) {
        const std::span<const double> x = probes.data().subspan(p * n, n);
        const std::vector<double> jac = feature_jacobian(model, x);
        const std::size_t f = jac.size() / n;
        double frob = 0.0;
        for (double v : jac) frob += v * v;
        const std::vector<double> base = features_of(model, {x.begin(), x.end()}, 1);

        std::vector<TaylorRow> probe_rows;
        for (double sigma : cfg.sigmas) {
            Rng rng = derive_rng(cfg.seed, p);  // common draws across the sigma sweep
            Accumulator acc;
            std::vector<double> noise, plus_rows, minus_rows;
            for (std::size_t done = 0; done < pairs;) {
                const std::size_t count = std::min(kChunk, pairs - done);
                noise.resize(count * n);
                for (double& z : noise) z = standard_normal(rng);
                perturbed_rows(x, noise, count, sigma, 1.0, plus_rows);
                perturbed_rows(x, noise, count, sigma, -1.0, minus_rows);
                const auto hp = features_of(model, plus_rows, count);
                const auto hm = features_of(model, minus_rows, count);
                for (std::size_t s = 0; s < count; ++s) {
                    double jz_sq = 0.0;
                    for (std::size_t i = 0; i < f; ++i) {
                        double jz = 0.0;
                        for (std::size_t k = 0; k < n; ++k) jz += jac[i * n + k] * noise[s * n + k];
                        jz_sq += jz * jz;
                    }
                    const double dp = squared_distance(&hp[s * f], base.data(), f);
                    const double dm = squared_distance(&hm[s * f], base.data(), f);
                    acc.add(0.5 * (dp + dm) - sigma * sigma * jz_sq);
                }
                done += count;
            }
            TaylorRow row;
            row.probe_index = p;
            row.sigma = sigma;
            row.taylor_prediction = sigma * sigma * frob;
            row.mc_estimate = row.taylor_prediction + acc.mean();
            row.std_error = acc.standard_error();
            row.relative_gap = std::fabs(row.mc_estimate - row.taylor_prediction) / row.taylor_prediction;
            if (!std::isfinite(row.mc_estimate) || !std::isfinite(row.relative_gap))
                throw NumericError("taylor_check: non-finite estimate at probe " + std::to_string(p));
            probe_rows.push_back(row);
        }

        if (report.affine_model) {
            for (const auto& r : probe_rows)
                consistent = consistent && std::fabs(r.mc_estimate - r.taylor_prediction) <=
                                               3.0 * r.std_error + 1e-12 * r.taylor_prediction;
        } else {
            std::vector<TaylorRow> sorted = probe_rows;
            std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.sigma < b.sigma; });
            for (std::size_t i = 1; i < sorted.size(); ++i)
                consistent = consistent && sorted[i].relative_gap >= sorted[i - 1].relative_gap;
        }
        report.rows.insert(report.rows.end(), probe_rows.begin(), probe_rows.end());
    }
    report.consistent = consistent;
    return report;
}

CosineCheckRow cosine_expansion_check(const Model& model, std::span<const double> x, double sigma,
                                      std::size_t samples, Rng& rng) {
    require_input(model, x);
    if (!(sigma >= 0.0)) throw ContractError("cosine_expansion_check: sigma must be >= 0");
    if (samples == 0) throw ContractError("cosine_expansion_check: samples must be >= 1");
    const std::size_t n = x.size();
    const std::vector<double> base = features_of(model, {x.begin(), x.end()}, 1);
    const std::size_t f = base.size();
    if (norm(base.data(), f) < 1e-6)
        throw ContractError("cosine_expansion_check: feature norm at the probe is below 1e-6");

    const std::size_t pairs = std::max<std::size_t>(1, samples / 2);
    Accumulator acc;
    std::vector<double> noise, plus_rows, minus_rows;
    for (std::size_t done = 0; done < pairs;) {
        const std::size_t count = std::min(kChunk, pairs - done);
        noise.resize(count * n);
        for (double& z : noise) z = standard_normal(rng);
        perturbed_rows(x, noise, count, sigma, 1.0, plus_rows);
        perturbed_rows(x, noise, count, sigma, -1.0, minus_rows);
        const auto hp = features_of(model, plus_rows, count);
        const auto hm = features_of(model, minus_rows, count);
        for (std::size_t s = 0; s < count; ++s)
            acc.add(0.5 * (one_minus_cosine(base.data(), &hp[s * f], f) +
                           one_minus_cosine(base.data(), &hm[s * f], f)));
        done += count;
    }
    CosineCheckRow row;
    row.sigma = sigma;
    row.residual = acc.mean();
    row.mc_cosine_mean = row.predicted_constant_term - row.residual;
    row.std_error = acc.standard_error();
    return row;
}

CosineSweep cosine_sweep(const Model& model, std::span<const double> x, std::span<const double> sigmas,
                         std::size_t samples, std::uint64_t seed) {
    CosineSweep sweep;
    std::vector<double> xs, ys;
    for (double sigma : sigmas) {
        Rng rng = derive_rng(seed, 0);
        sweep.rows.push_back(cosine_expansion_check(model, x, sigma, samples, rng));
        xs.push_back(sigma);
        ys.push_back(sweep.rows.back().residual);
    }
    if (xs.size() >= 2) sweep.loglog_slope = loglog_slope(xs, ys);
    return sweep;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("loglog_slope: need >= 2 paired points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw NumericError("loglog_slope: non-positive value");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace tiedaug
