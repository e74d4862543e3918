// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/semisup.hpp"

#include <algorithm>
#include <cmath>

#include "tiedaug/errors.hpp"

namespace tiedaug {

void FixMatchConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("fixmatch: threshold must lie in [0, 1]");
    if (!(unlabeled_weight >= 0.0)) throw ConfigError("fixmatch: unlabeled weight must be >= 0");
    if (ratio < 1) throw ConfigError("fixmatch: ratio must be >= 1");
    if (weak.kind == AugmentKind::mixup || strong.kind == AugmentKind::mixup)
        throw ConfigError("fixmatch: weak/strong views must be label-preserving");
}

FixMatchLoss tied_fixmatch_loss(const ModelOutput& labeled, std::span<const int> labels,
                                const ModelOutput& unlabeled_weak, const ModelOutput& unlabeled_strong,
                                const FixMatchConfig& cfg) {
    if (unlabeled_weak.features.shape() != unlabeled_strong.features.shape() ||
        unlabeled_weak.logits.shape() != unlabeled_strong.logits.shape())
        throw ContractError("tied_fixmatch_loss: weak/strong outputs differ in shape " +
                            shape_string(unlabeled_weak.features.shape()) + " vs " +
                            shape_string(unlabeled_strong.features.shape()));
    if (labeled.features.dim(1) != unlabeled_weak.features.dim(1))
        throw ContractError("tied_fixmatch_loss: labeled and unlabeled feature widths differ");

    FixMatchLoss out;
    Tensor supervised = mean(cross_entropy(labeled.logits, labels));

    // Pseudo-labels from a detached softmax: no gradient reaches the weak logits.
    const std::size_t n = unlabeled_weak.logits.dim(0);
    Tensor q;
    {
        NoGradGuard no_grad;
        q = softmax(unlabeled_weak.logits.detach());
    }
    const std::size_t classes = q.dim(1);
    out.pseudo_labels = argmax_rows(q);
    out.mask.assign(n, 0);
    std::vector<double> mask_values(n, 0.0);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double confidence = q.data()[i * classes + static_cast<std::size_t>(out.pseudo_labels[i])];
        if (confidence >= cfg.threshold) {
            out.mask[i] = 1;
            mask_values[i] = 1.0;
            ++kept;
        }
    }

    Tensor unlabeled = Tensor::scalar(0.0);
    Tensor similarity = Tensor::scalar(0.0);
    if (kept > 0) {
        const Tensor mask = Tensor::from({n}, mask_values);
        const double inv = 1.0 / static_cast<double>(kept);
        unlabeled = scale(sum(mul(cross_entropy(unlabeled_strong.logits, out.pseudo_labels), mask)), inv);
        Tensor distances = row_sum(square(sub(unlabeled_weak.features, unlabeled_strong.features)));
        similarity = scale(sum(mul(distances, mask)), inv);
    }
    Tensor total = add(add(supervised, scale(unlabeled, cfg.unlabeled_weight)), scale(similarity, cfg.tied_weight));

    out.total = total;
    auto& b = out.breakdown;
    b.total = total.item();
    b.supervised = supervised.item();
    b.unlabeled = unlabeled.item();
    b.similarity_masked = similarity.item();
    b.masked_count = kept;
    b.mask_rate = n == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(n);
    return out;
}

FixMatchLoss tied_fixmatch_loss(const Model& model, const SemiBatch& batch, const FixMatchConfig& cfg, Rng& rng,
                                ForwardMode mode) {
    cfg.validate();
    const ImageBatch labeled = apply(cfg.weak, batch.labeled, rng);
    const ImageBatch weak = apply(cfg.weak, batch.unlabeled, rng);
    const ImageBatch strong = apply(cfg.strong, batch.unlabeled, rng);
    const Tensor inputs[] = {labeled.pixels, weak.pixels, strong.pixels};
    const auto outs = forward_views(model, inputs, mode);
    return tied_fixmatch_loss(outs[0], batch.labeled.labels, outs[1], outs[2], cfg);
}

}  // namespace tiedaug
