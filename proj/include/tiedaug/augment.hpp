// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tiedaug/rng.hpp"
#include "tiedaug/tensor.hpp"

namespace tiedaug {

/// N×C×H×W pixels in [0,1] plus integer labels.
struct ImageBatch {
    Tensor pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    /// Per-example C×H×W.
    Shape image_shape() const;
    /// Rows picked by index, in the given order.
    ImageBatch select(std::span<const std::size_t> indices) const;
    /// Throws ContractError on shape/label inconsistencies or labels outside [0, classes).
    void validate(std::size_t classes) const;
};

enum class AugmentKind { identity, crop_flip, gaussian_noise, randaugment, mixup };
enum class CropMode { shared, independent };

/// One stochastic augmentation. Every kind may carry a pad-crop-flip stage that
/// runs first; it is active when pad > 0 or flip_prob > 0 (crop_flip is that
/// stage alone).
struct AugmentSpec {
    AugmentKind kind = AugmentKind::identity;
    std::size_t pad = 0;
    double flip_prob = 0.0;
    double sigma = 0.0;       // gaussian_noise std
    std::size_t layers = 2;   // randaugment N
    double magnitude = 10.0;  // randaugment M on the 0..30 scale
    double prob = 1.0;        // randaugment per-op application probability P
    double alpha = 1.0;       // mixup Beta(alpha, alpha)

    static AugmentSpec identity() { return {}; }
    static AugmentSpec crop_flip(std::size_t pad = 2, double flip_prob = 0.5);
    static AugmentSpec gaussian_noise(double sigma);
    static AugmentSpec randaugment(std::size_t layers, double magnitude, double prob = 1.0);

    bool has_crop_stage() const { return pad > 0 || flip_prob > 0.0; }
    /// Throws ConfigError for invalid parameters or pad >= min(H, W).
    void validate(const Shape& image) const;
};

AugmentKind parse_augment_kind(const std::string& name);
std::string to_string(AugmentKind kind);

struct ViewPair {
    ImageBatch view1;
    ImageBatch view2;
    CropMode crop_mode = CropMode::independent;
};

/// Applies `spec` to every image independently. Gaussian noise is clamped to [0,1].
ImageBatch apply(const AugmentSpec& spec, const ImageBatch& batch, Rng& rng);

/// Two views of the same batch. In shared mode the crop offsets and flips are drawn
/// once per image and reused for both views; the specs must then agree on pad and
/// flip_prob. Mixup specs are rejected (see mixup_batch / tied_mixup_loss).
ViewPair make_views(const AugmentSpec& spec1, const AugmentSpec& spec2, const ImageBatch& batch,
                    CropMode crop_mode, Rng& rng);

struct MixupBatch {
    Tensor mixed;    // lambda·x + (1 − lambda)·x[permutation]
    Tensor partner;  // x[permutation]
    std::vector<int> labels1;
    std::vector<int> labels2;
    double lambda = 1.0;
    std::vector<std::size_t> permutation;
};

/// lambda ~ Beta(alpha, alpha), partners from a uniform random permutation.
MixupBatch mixup_batch(const ImageBatch& batch, double alpha, Rng& rng);
/// Deterministic core of mixup_batch with lambda and permutation supplied.
MixupBatch mix_with(const ImageBatch& batch, double lambda, std::vector<std::size_t> permutation);

/// Convex pixel combination lambda·a + (1 − lambda)·b (no tape).
Tensor mix_pixels(const Tensor& a, const Tensor& b, double lambda);

double sample_beta(double alpha, double beta, Rng& rng);

namespace augment_ops {

constexpr double kFillValue = 0.5;

/// All ops act in place on one C×H×W image; `strength` is magnitude/30 in [0,1].
void brightness(std::span<double> image, double strength, Rng& rng);
void contrast(std::span<double> image, double strength, Rng& rng);
void invert(std::span<double> image);
void translate_x(std::span<double> image, const Shape& chw, double strength, Rng& rng);
void translate_y(std::span<double> image, const Shape& chw, double strength, Rng& rng);
/// size×size square at a uniformly drawn position fully inside the image, filled with 0.5.
void cutout(std::span<double> image, const Shape& chw, std::size_t size, Rng& rng);

}  // namespace augment_ops

}  // namespace tiedaug
