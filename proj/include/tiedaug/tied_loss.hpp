// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>

#include "tiedaug/models.hpp"
#include "tiedaug/tensor.hpp"

namespace tiedaug {

enum class SimilarityKind { l2, l1, cosine };

/// Sign-normalized dissimilarity between paired feature rows: smaller is always
/// more similar, so a positive tied weight always pulls the views together.
///   l2:     mean_i ||v1_i - v2_i||^2
///   l1:     mean_i ||v1_i - v2_i||_1
///   cosine: mean_i -cos(v1_i, v2_i), norms guarded by max(||v||, epsilon)
/// A published negative cosine weight w_paper corresponds to +|w| here.
struct Similarity {
    SimilarityKind kind = SimilarityKind::l2;
    double epsilon = 1e-12;
};

SimilarityKind parse_similarity_kind(const std::string& name);
std::string to_string(SimilarityKind kind);

enum class SupervisedBranches { both, first_only };

struct TiedLossConfig {
    double tied_weight = 4.0;  // may be negative (pushes views apart)
    Similarity similarity;
    SupervisedBranches branches = SupervisedBranches::both;
};

/// Scalars logged per step. total == supervised + tied_weight * similarity_penalty.
struct TiedLossBreakdown {
    double total = 0.0;
    double supervised = 0.0;
    double ce1 = 0.0;
    std::optional<double> ce2;  // absent in first_only mode
    double similarity_penalty = 0.0;
    double feature_distance_l2 = 0.0;
};

/// Differentiable total plus its logged decomposition.
struct TiedLoss {
    Tensor total;
    TiedLossBreakdown breakdown;
};

Tensor similarity_penalty(const Similarity& similarity, const Tensor& v1, const Tensor& v2);

/// Supervised part is (CE1 + CE2)/2 in `both` mode, CE1 in `first_only` mode.
TiedLoss tied_loss(const ModelOutput& out1, const ModelOutput& out2, std::span<const int> labels,
                   const TiedLossConfig& cfg);

/// Tied-mixup from the three forwards (x1, x2, mixed = lambda·x1 + (1-lambda)·x2):
///   supervised = lambda·CE(f(mixed), y1) + (1-lambda)·CE(f(mixed), y2)
///   penalty    = mean ||lambda·h(x1) + (1-lambda)·h(x2) - h(mixed)||^2
TiedLoss tied_mixup_loss(const ModelOutput& out1, const ModelOutput& out2, const ModelOutput& out_mixed,
                         std::span<const int> labels1, std::span<const int> labels2, double lambda,
                         double tied_weight);

/// Runs the three forwards separately, then the loss above.
TiedLoss tied_mixup_loss(const Model& model, const Tensor& x1, std::span<const int> labels1, const Tensor& x2,
                         std::span<const int> labels2, double lambda, double tied_weight);

}  // namespace tiedaug
