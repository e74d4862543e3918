// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tiedaug/augment.hpp"
#include "tiedaug/models.hpp"

namespace tiedaug {

struct FixMatchConfig {
    double threshold = 0.95;       // tau
    double unlabeled_weight = 1.0; // lambda_u
    std::size_t ratio = 7;         // mu: unlabeled per labeled example
    double tied_weight = 4.0;      // 0 gives plain FixMatch
    AugmentSpec weak = AugmentSpec::crop_flip();
    AugmentSpec strong = AugmentSpec::randaugment(2, 10.0, 0.5);

    void validate() const;
};

struct SemiBatch {
    ImageBatch labeled;
    ImageBatch unlabeled;  // labels ignored
};

/// total == supervised + unlabeled_weight * unlabeled + tied_weight * similarity_masked
struct FixMatchBreakdown {
    double total = 0.0;
    double supervised = 0.0;         // l_s
    double unlabeled = 0.0;          // l_u
    double similarity_masked = 0.0;  // mean over masked rows of ||h_weak - h_strong||^2
    double mask_rate = 0.0;
    std::size_t masked_count = 0;
};

struct FixMatchLoss {
    Tensor total;
    FixMatchBreakdown breakdown;
    std::vector<int> pseudo_labels;
    std::vector<int> mask;  // 1 where max softmax of the weak view >= threshold
};

/// Loss from already-computed outputs. Pseudo-labels and the mask come from a
/// detached softmax of the weak logits; the weak features keep their gradient.
/// An empty mask yields l_u = 0 and similarity_masked = 0.
FixMatchLoss tied_fixmatch_loss(const ModelOutput& labeled, std::span<const int> labels,
                                const ModelOutput& unlabeled_weak, const ModelOutput& unlabeled_strong,
                                const FixMatchConfig& cfg);

/// Augments (weak labeled, weak/strong unlabeled), runs the forwards, and scores them.
FixMatchLoss tied_fixmatch_loss(const Model& model, const SemiBatch& batch, const FixMatchConfig& cfg,
                                Rng& rng, ForwardMode mode = ForwardMode::separate);

}  // namespace tiedaug
