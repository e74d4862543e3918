// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "tiedaug/errors.hpp"
#include "tiedaug/models.hpp"
#include "tiedaug/optim.hpp"
#include "tiedaug/rng.hpp"

using namespace tiedaug;

namespace {

SgdConfig plain(double lr) {
    SgdConfig c;
    c.learning_rate = lr;
    c.momentum = 0.0;
    c.nesterov = false;
    c.weight_decay = 0.0;
    return c;
}

std::vector<Parameter> one_param(std::vector<double> v) {
    const std::size_t n = v.size();
    return {{"theta", Tensor::from({n}, std::move(v), true)}};
}

// theta² summed, dressed up as a TiedLoss so SAM can drive it.
SamObjective quadratic(std::vector<Parameter>& params) {
    return [&params](double) {
        TiedLoss l;
        l.total = sum(square(params[0].value));
        l.breakdown.total = l.total.item();
        return l;
    };
}

std::vector<double> values(const Parameter& p) { return {p.value.data().begin(), p.value.data().end()}; }

}  // namespace

TEST_CASE("plain SGD subtracts lr times the gradient") {
    auto params = one_param({1.0, -2.0});
    backward(sum(scale(params[0].value, 3.0)));
    Sgd sgd(plain(0.1));
    sgd.step(params, 0);
    CHECK(values(params[0]) == std::vector<double>{1.0 - 0.1 * 3.0, -2.0 - 0.1 * 3.0});
}

TEST_CASE("missing gradient is a contract violation") {
    auto params = one_param({1.0});
    Sgd sgd(plain(0.1));
    CHECK_THROWS_AS(sgd.step(params, 0), ContractError);
}

TEST_CASE("cosine rate hits zero at T_max") {
    SgdConfig c = plain(0.2);
    c.schedule = ScheduleKind::cosine;
    c.total_steps = 10;
    CHECK(c.rate(0) == 0.2);
    CHECK(c.rate(5) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(c.rate(10) == 0.0);

    auto params = one_param({1.0});
    backward(sum(params[0].value));
    Sgd sgd(c);
    sgd.step(params, 10);
    CHECK(params[0].value.data()[0] == 1.0);
}

TEST_CASE("step schedule decays at milestones") {
    SgdConfig c = plain(1.0);
    c.schedule = ScheduleKind::step;
    c.milestones = {3, 6};
    c.factor = 0.5;
    CHECK(c.rate(2) == 1.0);
    CHECK(c.rate(3) == 0.5);
    CHECK(c.rate(7) == 0.25);
}

TEST_CASE("momentum matches a hand unroll over two steps") {
    for (bool nesterov : {false, true}) {
        SgdConfig c = plain(0.1);
        c.momentum = 0.9;
        c.nesterov = nesterov;
        c.weight_decay = 0.01;
        auto params = one_param({2.0});
        Sgd sgd(c);
        double theta = 2.0, v = 0.0;
        for (std::size_t step = 0; step < 2; ++step) {
            params[0].value.zero_grad();
            backward(sum(square(params[0].value)));
            sgd.step(params, step);
            const double g = 2.0 * theta;
            theta -= 0.1 * 0.01 * theta;
            v = 0.9 * v + g;
            theta -= 0.1 * (nesterov ? g + 0.9 * v : v);
        }
        CHECK(std::fabs(params[0].value.data()[0] - theta) <= 1e-12);
    }
}

TEST_CASE("invalid optimizer settings are config errors") {
    SgdConfig c = plain(-1.0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = plain(0.1);
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    SamConfig s;
    s.rho = -0.1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS((void)parse_schedule_kind("linear"), ConfigError);
}

TEST_CASE("SAM on theta^2 from theta = 1 with rho = 0.5") {
    auto params = one_param({1.0});
    Sgd sgd(plain(0.1));
    SamConfig cfg;
    cfg.rho = 0.5;
    const auto r = sam_step(params, quadratic(params), cfg, sgd, 0);
    CHECK(r.first_gradient[0][0] == 2.0);
    CHECK(r.perturbation_norm == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.second_gradient[0][0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(params[0].value.data()[0] == doctest::Approx(1.0 - 0.1 * 3.0).epsilon(1e-12));
}

TEST_CASE("zero learning rate restores weights bitwise") {
    ModelSpec s;
    s.input = {1, 1, 3};
    s.hidden = {4};
    s.feature_dim = 3;
    s.classes = 2;
    s.activation = Activation::tanh;
    Model m = Model::build(s, 1);
    const auto before = [&] {
        std::vector<std::vector<double>> v;
        for (auto& p : m.parameters()) v.emplace_back(p.value.data().begin(), p.value.data().end());
        return v;
    }();
    const Tensor x = Tensor::from({2, 3}, {0.1, 0.5, -0.2, 0.9, 0.3, 0.4});
    const std::vector<int> y{0, 1};
    SamObjective obj = [&](double sign) {
        TiedLossConfig cfg;
        cfg.tied_weight = 4.0 * sign;
        return tied_loss(m.forward(x), m.forward(scale(x, 0.9)), y, cfg);
    };
    Sgd sgd(plain(0.0));
    SamConfig cfg;
    cfg.rho = 0.3;
    const auto r = sam_step(m.parameters(), obj, cfg, sgd, 0);
    CHECK(r.perturbation_norm == doctest::Approx(0.3).epsilon(1e-10));
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(values(m.parameters()[i]) == before[i]);
}

TEST_CASE("negated first step uses the gradient at -w") {
    ModelSpec s;
    s.input = {1, 1, 3};
    s.hidden = {4};
    s.feature_dim = 3;
    s.classes = 2;
    s.activation = Activation::tanh;
    Model m = Model::build(s, 2);
    const Tensor x1 = Tensor::from({2, 3}, {0.1, 0.5, -0.2, 0.9, 0.3, 0.4});
    const Tensor x2 = Tensor::from({2, 3}, {0.2, 0.1, 0.0, 0.7, -0.3, 0.5});
    const std::vector<int> y{0, 1};
    auto loss_at = [&](double w) {
        TiedLossConfig cfg;
        cfg.tied_weight = w;
        return tied_loss(m.forward(x1), m.forward(x2), y, cfg);
    };
    zero_gradients(m.parameters());
    backward(loss_at(-4.0).total);
    const auto expected = collect_gradients(m.parameters());
    zero_gradients(m.parameters());

    Sgd sgd(plain(0.0));
    SamConfig cfg;
    cfg.first_step = TiedFirstStep::negated;
    const auto r = sam_step(m.parameters(), [&](double sign) { return loss_at(4.0 * sign); }, cfg, sgd, 0);
    for (std::size_t i = 0; i < expected.size(); ++i)
        for (std::size_t j = 0; j < expected[i].size(); ++j) CHECK(r.first_gradient[i][j] == expected[i][j]);
}

TEST_CASE("tiny rho reduces SAM to a plain step") {
    auto a = one_param({0.7, -0.4});
    auto b = one_param({0.7, -0.4});
    Sgd s1(plain(0.1)), s2(plain(0.1));
    SamConfig cfg;
    cfg.rho = 1e-8;
    (void)sam_step(a, quadratic(a), cfg, s1, 0);
    backward(sum(square(b[0].value)));
    s2.step(b, 0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::fabs(a[0].value.data()[i] - b[0].value.data()[i]) <= 1e-6);
}

TEST_CASE("zero ascent gradient skips the perturbation") {
    auto params = one_param({0.0});
    Sgd sgd(plain(0.1));
    const auto r = sam_step(params, quadratic(params), SamConfig{}, sgd, 0);
    CHECK(r.degenerate);
    CHECK(r.perturbation_norm == 0.0);
    CHECK(params[0].value.data()[0] == 0.0);
}
