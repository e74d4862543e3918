// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/tied_loss.hpp"

#include "tiedaug/augment.hpp"
#include "tiedaug/errors.hpp"

namespace tiedaug {

namespace {

Tensor mean_l2(const Tensor& v1, const Tensor& v2) { return mean(row_sum(square(sub(v1, v2)))); }

void require_pair(const char* op, const Tensor& v1, const Tensor& v2) {
    if (!v1.defined() || !v2.defined() || v1.rank() != 2 || v1.shape() != v2.shape())
        throw ContractError(std::string(op) + ": features must be equal-shape N×F, got " +
                            (v1.defined() ? shape_string(v1.shape()) : "undefined") + " vs " +
                            (v2.defined() ? shape_string(v2.shape()) : "undefined"));
}

}  // namespace

SimilarityKind parse_similarity_kind(const std::string& name) {
    if (name == "l2") return SimilarityKind::l2;
    if (name == "l1") return SimilarityKind::l1;
    if (name == "cosine") return SimilarityKind::cosine;
    throw ConfigError("unknown similarity kind '" + name + "'");
}

std::string to_string(SimilarityKind kind) {
    switch (kind) {
        case SimilarityKind::l2: return "l2";
        case SimilarityKind::l1: return "l1";
        case SimilarityKind::cosine: return "cosine";
    }
    return "?";
}

Tensor similarity_penalty(const Similarity& similarity, const Tensor& v1, const Tensor& v2) {
    require_pair("similarity_penalty", v1, v2);
    if (!(similarity.epsilon > 0.0)) throw ContractError("similarity_penalty: epsilon must be > 0");
    switch (similarity.kind) {
        case SimilarityKind::l2:
            return mean_l2(v1, v2);
        case SimilarityKind::l1:
            return mean(row_sum(abs(sub(v1, v2))));
        case SimilarityKind::cosine: {
            // max(||v||, eps) == sqrt(max(||v||^2, eps^2)); clamping before the sqrt
            // keeps the derivative finite at v = 0.
            const double floor = similarity.epsilon * similarity.epsilon;
            Tensor n1 = sqrt(clamp_min(row_sum(square(v1)), floor));
            Tensor n2 = sqrt(clamp_min(row_sum(square(v2)), floor));
            Tensor cosine = div(row_sum(mul(v1, v2)), mul(n1, n2));
            return scale(mean(cosine), -1.0);
        }
    }
    throw ContractError("similarity_penalty: unknown kind");
}

TiedLoss tied_loss(const ModelOutput& out1, const ModelOutput& out2, std::span<const int> labels,
                   const TiedLossConfig& cfg) {
    require_pair("tied_loss", out1.features, out2.features);
    require_pair("tied_loss", out1.logits, out2.logits);
    if (out1.logits.dim(0) != labels.size() || out1.features.dim(0) != labels.size())
        throw ContractError("tied_loss: batch of " + std::to_string(labels.size()) +
                            " labels does not match outputs " + shape_string(out1.logits.shape()));

    Tensor ce1 = mean(cross_entropy(out1.logits, labels));
    TiedLossBreakdown b;
    b.ce1 = ce1.item();
    Tensor supervised = ce1;
    if (cfg.branches == SupervisedBranches::both) {
        Tensor ce2 = mean(cross_entropy(out2.logits, labels));
        b.ce2 = ce2.item();
        supervised = scale(add(ce1, ce2), 0.5);
    }
    Tensor penalty = similarity_penalty(cfg.similarity, out1.features, out2.features);
    Tensor total = add(supervised, scale(penalty, cfg.tied_weight));

    b.supervised = supervised.item();
    b.similarity_penalty = penalty.item();
    if (cfg.similarity.kind == SimilarityKind::l2) {
        b.feature_distance_l2 = b.similarity_penalty;
    } else {
        NoGradGuard no_grad;
        b.feature_distance_l2 = mean_l2(out1.features, out2.features).item();
    }
    b.total = total.item();
    return {total, b};
}

TiedLoss tied_mixup_loss(const ModelOutput& out1, const ModelOutput& out2, const ModelOutput& out_mixed,
                         std::span<const int> labels1, std::span<const int> labels2, double lambda,
                         double tied_weight) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ContractError("tied_mixup_loss: lambda " + std::to_string(lambda) + " outside [0,1]");
    require_pair("tied_mixup_loss", out1.features, out2.features);
    require_pair("tied_mixup_loss", out1.features, out_mixed.features);

    Tensor ce1 = mean(cross_entropy(out_mixed.logits, labels1));
    Tensor ce2 = mean(cross_entropy(out_mixed.logits, labels2));
    Tensor supervised = add(scale(ce1, lambda), scale(ce2, 1.0 - lambda));
    Tensor mixed_features = add(scale(out1.features, lambda), scale(out2.features, 1.0 - lambda));
    Tensor penalty = mean_l2(mixed_features, out_mixed.features);
    Tensor total = add(supervised, scale(penalty, tied_weight));

    TiedLossBreakdown b;
    b.total = total.item();
    b.supervised = supervised.item();
    b.ce1 = ce1.item();
    b.ce2 = ce2.item();
    b.similarity_penalty = penalty.item();
    b.feature_distance_l2 = b.similarity_penalty;
    return {total, b};
}

TiedLoss tied_mixup_loss(const Model& model, const Tensor& x1, std::span<const int> labels1, const Tensor& x2,
                         std::span<const int> labels2, double lambda, double tied_weight) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ContractError("tied_mixup_loss: lambda " + std::to_string(lambda) + " outside [0,1]");
    if (x1.shape() != x2.shape())
        throw ContractError("tied_mixup_loss: x1 " + shape_string(x1.shape()) + " vs x2 " +
                            shape_string(x2.shape()));
    const ModelOutput out1 = model.forward(x1);
    const ModelOutput out2 = model.forward(x2);
    const ModelOutput out_mixed = model.forward(mix_pixels(x1, x2, lambda));
    return tied_mixup_loss(out1, out2, out_mixed, labels1, labels2, lambda, tied_weight);
}

}  // namespace tiedaug
