// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "tiedaug/errors.hpp"
#include "tiedaug/grad_check.hpp"
#include "tiedaug/rng.hpp"
#include "tiedaug/semisup.hpp"

using namespace tiedaug;

namespace {

// Two-class logits whose softmax maximum is p: log(p / (1 - p)) apart.
std::vector<double> logits_with_confidence(std::initializer_list<double> maxima) {
    std::vector<double> v;
    for (double p : maxima) {
        v.push_back(std::log(p / (1.0 - p)));
        v.push_back(0.0);
    }
    return v;
}

Tensor random_tensor(Shape shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = standard_normal(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

struct Fixture {
    Rng rng{1};
    ModelOutput labeled{random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)};
    std::vector<int> labels{0, 1};
    ModelOutput weak{random_tensor({3, 3}, rng), Tensor::from({3, 2}, logits_with_confidence({0.99, 0.5, 0.97}))};
    ModelOutput strong{random_tensor({3, 3}, rng), random_tensor({3, 2}, rng)};
};

}  // namespace

TEST_CASE("confidences 0.99, 0.5, 0.97 at tau 0.95 keep two examples") {
    Fixture f;
    FixMatchConfig cfg;
    cfg.threshold = 0.95;
    const auto l = tied_fixmatch_loss(f.labeled, f.labels, f.weak, f.strong, cfg);
    CHECK(l.mask == std::vector<int>{1, 0, 1});
    CHECK(l.breakdown.masked_count == 2);
    CHECK(l.breakdown.mask_rate == doctest::Approx(2.0 / 3.0));
    CHECK(l.pseudo_labels[0] == 0);
    CHECK(l.pseudo_labels[2] == 0);

    // Hand-computed averages over rows 0 and 2.
    const auto ce = cross_entropy(f.strong.logits, std::vector<int>{0, 0, 0});
    const double lu = (ce.data()[0] + ce.data()[2]) / 2.0;
    CHECK(l.breakdown.unlabeled == doctest::Approx(lu).epsilon(1e-14));
    double s = 0.0;
    for (std::size_t r : {0u, 2u})
        for (std::size_t j = 0; j < 3; ++j) {
            const double d = f.weak.features.data()[r * 3 + j] - f.strong.features.data()[r * 3 + j];
            s += d * d;
        }
    CHECK(l.breakdown.similarity_masked == doctest::Approx(s / 2.0).epsilon(1e-14));
}

TEST_CASE("decomposition holds") {
    Fixture f;
    FixMatchConfig cfg;
    cfg.threshold = 0.6;
    cfg.unlabeled_weight = 1.5;
    cfg.tied_weight = 3.0;
    const auto l = tied_fixmatch_loss(f.labeled, f.labels, f.weak, f.strong, cfg);
    const auto& b = l.breakdown;
    CHECK(std::fabs(l.total.item() - (b.supervised + 1.5 * b.unlabeled + 3.0 * b.similarity_masked)) <= 1e-12);
    CHECK(b.total == l.total.item());
}

TEST_CASE("tau = 1 masks everything") {
    Fixture f;
    FixMatchConfig cfg;
    cfg.threshold = 1.0;
    const auto l = tied_fixmatch_loss(f.labeled, f.labels, f.weak, f.strong, cfg);
    CHECK(l.breakdown.masked_count == 0);
    CHECK(l.breakdown.unlabeled == 0.0);
    CHECK(l.breakdown.similarity_masked == 0.0);
    CHECK(l.total.item() == l.breakdown.supervised);
}

TEST_CASE("w = 0, tau = 0 is plain FixMatch with every pseudo-label") {
    Fixture f;
    FixMatchConfig cfg;
    cfg.threshold = 0.0;
    cfg.tied_weight = 0.0;
    const auto l = tied_fixmatch_loss(f.labeled, f.labels, f.weak, f.strong, cfg);
    CHECK(l.breakdown.masked_count == 3);
    const double expected = mean(cross_entropy(f.strong.logits, l.pseudo_labels)).item();
    CHECK(l.breakdown.unlabeled == doctest::Approx(expected).epsilon(1e-14));
    CHECK(l.total.item() == doctest::Approx(l.breakdown.supervised + l.breakdown.unlabeled).epsilon(1e-14));
}

TEST_CASE("raising tau never raises the mask rate") {
    Rng rng(3);
    Fixture f;
    f.weak.logits = random_tensor({3, 2}, rng);
    double previous = 2.0;
    for (double tau : {0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
        FixMatchConfig cfg;
        cfg.threshold = tau;
        const double rate = tied_fixmatch_loss(f.labeled, f.labels, f.weak, f.strong, cfg).breakdown.mask_rate;
        CHECK(rate <= previous);
        previous = rate;
    }
}

TEST_CASE("no gradient reaches the weak logits through the pseudo-labels") {
    Fixture f;
    Tensor weak_logits = Tensor::from({3, 2}, logits_with_confidence({0.99, 0.5, 0.97}), true);
    Tensor strong_logits = Tensor::from(f.strong.logits.shape(),
                                        {f.strong.logits.data().begin(), f.strong.logits.data().end()}, true);
    FixMatchConfig cfg;
    const auto l = tied_fixmatch_loss(f.labeled, f.labels, {f.weak.features, weak_logits},
                                      {f.strong.features, strong_logits}, cfg);
    backward(l.total);
    if (weak_logits.has_grad())
        for (double g : weak_logits.grad()) CHECK(g == 0.0);
    CHECK(strong_logits.has_grad());
}

TEST_CASE("gradient of the full loss matches finite differences away from the threshold") {
    ModelSpec s;
    s.input = {1, 1, 4};
    s.hidden = {5};
    s.feature_dim = 3;
    s.classes = 3;
    s.activation = Activation::tanh;
    Model m = Model::build(s, 4);
    Rng rng(5);
    const Tensor xl = random_tensor({2, 4}, rng);
    const Tensor xw = random_tensor({4, 4}, rng);
    const Tensor xs = random_tensor({4, 4}, rng);
    const std::vector<int> y{0, 2};
    FixMatchConfig cfg;
    cfg.threshold = 0.0;  // all rows kept so no mask flips under perturbation
    cfg.tied_weight = 4.0;
    std::vector<Tensor> params;
    for (auto& p : m.parameters()) params.push_back(p.value);
    auto f = [&] { return tied_fixmatch_loss(m.forward(xl), y, m.forward(xw), m.forward(xs), cfg).total; };
    CHECK(grad_check(f, params) <= 1e-4);
}

TEST_CASE("model-driven form runs and validates its config") {
    ModelSpec s;
    s.input = {1, 4, 4};
    s.hidden = {6};
    s.feature_dim = 4;
    s.classes = 2;
    const Model m = Model::build(s, 6);
    Rng rng(7);
    SemiBatch batch;
    batch.labeled = {Tensor::full({2, 1, 4, 4}, 0.3), {0, 1}};
    batch.unlabeled = {Tensor::full({6, 1, 4, 4}, 0.6), std::vector<int>(6, 0)};
    FixMatchConfig cfg;
    cfg.weak = AugmentSpec::crop_flip(1, 0.5);
    cfg.strong = AugmentSpec::randaugment(2, 10);
    const auto l = tied_fixmatch_loss(m, batch, cfg, rng);
    CHECK(std::isfinite(l.total.item()));
    CHECK(l.mask.size() == 6);

    cfg.threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.threshold = 0.9;
    cfg.ratio = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
