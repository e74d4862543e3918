// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tiedaug/errors.hpp"

namespace tiedaug {

namespace {

struct CropDraw {
    std::size_t dy = 0;
    std::size_t dx = 0;
    bool flip = false;
};

CropDraw draw_crop(const AugmentSpec& spec, Rng& rng) {
    CropDraw d;
    const auto span = static_cast<std::int64_t>(2 * spec.pad);
    d.dy = static_cast<std::size_t>(uniform_int(rng, 0, span));
    d.dx = static_cast<std::size_t>(uniform_int(rng, 0, span));
    d.flip = bernoulli(rng, spec.flip_prob);
    return d;
}

// Zero-pad by `pad`, take the H×W window at (dy, dx), then optionally mirror.
void crop_flip_image(std::span<double> image, const Shape& chw, std::size_t pad, const CropDraw& d) {
    const std::size_t c = chw[0], h = chw[1], w = chw[2];
    std::vector<double> src(image.begin(), image.end());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t jj = d.flip ? w - 1 - j : j;
                const auto si = static_cast<std::ptrdiff_t>(i + d.dy) - static_cast<std::ptrdiff_t>(pad);
                const auto sj = static_cast<std::ptrdiff_t>(jj + d.dx) - static_cast<std::ptrdiff_t>(pad);
                double v = 0.0;
                if (si >= 0 && sj >= 0 && si < static_cast<std::ptrdiff_t>(h) &&
                    sj < static_cast<std::ptrdiff_t>(w))
                    v = src[(ch * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)];
                image[(ch * h + i) * w + j] = v;
            }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double random_sign(Rng& rng) { return bernoulli(rng, 0.5) ? -1.0 : 1.0; }

// Everything after the crop stage, for one image.
void apply_main(const AugmentSpec& spec, std::span<double> image, const Shape& chw, Rng& rng) {
    switch (spec.kind) {
        case AugmentKind::identity:
        case AugmentKind::crop_flip:
        case AugmentKind::mixup:
            return;
        case AugmentKind::gaussian_noise:
            for (double& v : image) v = clamp01(v + spec.sigma * standard_normal(rng));
            return;
        case AugmentKind::randaugment: {
            const double strength = spec.magnitude / 30.0;
            for (std::size_t layer = 0; layer < spec.layers; ++layer) {
                const auto op = uniform_int(rng, 0, 5);
                if (!bernoulli(rng, spec.prob)) continue;
                switch (op) {
                    case 0: augment_ops::brightness(image, strength, rng); break;
                    case 1: augment_ops::contrast(image, strength, rng); break;
                    case 2: augment_ops::invert(image); break;
                    case 3: augment_ops::translate_x(image, chw, strength, rng); break;
                    case 4: augment_ops::translate_y(image, chw, strength, rng); break;
                    default: {
                        const auto side = static_cast<double>(std::min(chw[1], chw[2]));
                        const auto size = static_cast<std::size_t>(std::lround(0.5 * strength * side));
                        augment_ops::cutout(image, chw, size, rng);
                    }
                }
            }
            return;
        }
    }
}

std::span<double> image_at(std::vector<double>& pixels, std::size_t index, std::size_t stride) {
    return std::span<double>(pixels).subspan(index * stride, stride);
}

}  // namespace

// ---- ImageBatch ------------------------------------------------------------------

Shape ImageBatch::image_shape() const {
    const Shape& s = pixels.shape();
    return Shape(s.begin() + 1, s.end());
}

ImageBatch ImageBatch::select(std::span<const std::size_t> indices) const {
    const Shape chw = image_shape();
    const std::size_t stride = shape_numel(chw);
    std::vector<double> out;
    out.reserve(indices.size() * stride);
    std::vector<int> labs;
    labs.reserve(indices.size());
    auto src = pixels.data();
    for (std::size_t idx : indices) {
        if (idx >= size()) throw ContractError("ImageBatch::select: index " + std::to_string(idx) + " out of range");
        out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(idx * stride),
                   src.begin() + static_cast<std::ptrdiff_t>((idx + 1) * stride));
        labs.push_back(labels[idx]);
    }
    Shape shape{indices.size()};
    shape.insert(shape.end(), chw.begin(), chw.end());
    return {Tensor::from(std::move(shape), std::move(out)), std::move(labs)};
}

void ImageBatch::validate(std::size_t classes) const {
    if (!pixels.defined() || pixels.rank() != 4)
        throw ContractError("ImageBatch: pixels must be N×C×H×W");
    if (pixels.dim(0) != labels.size())
        throw ContractError("ImageBatch: " + std::to_string(labels.size()) + " labels for pixels " +
                            shape_string(pixels.shape()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw ContractError("ImageBatch: label " + std::to_string(labels[i]) + " at index " +
                                std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
}

// ---- AugmentSpec -------------------------------------------------------------------

AugmentSpec AugmentSpec::crop_flip(std::size_t pad, double flip_prob) {
    AugmentSpec s;
    s.kind = AugmentKind::crop_flip;
    s.pad = pad;
    s.flip_prob = flip_prob;
    return s;
}

AugmentSpec AugmentSpec::gaussian_noise(double sigma) {
    AugmentSpec s;
    s.kind = AugmentKind::gaussian_noise;
    s.sigma = sigma;
    return s;
}

AugmentSpec AugmentSpec::randaugment(std::size_t layers, double magnitude, double prob) {
    AugmentSpec s;
    s.kind = AugmentKind::randaugment;
    s.layers = layers;
    s.magnitude = magnitude;
    s.prob = prob;
    return s;
}

void AugmentSpec::validate(const Shape& image) const {
    if (!(sigma >= 0.0)) throw ConfigError("augment: sigma must be >= 0");
    if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("augment: probability must lie in [0,1]");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment: flip_prob must lie in [0,1]");
    if (kind == AugmentKind::randaugment && layers < 1) throw ConfigError("augment: randaugment needs layers >= 1");
    if (!(magnitude >= 0.0 && magnitude <= 30.0)) throw ConfigError("augment: magnitude must lie in [0,30]");
    if (!(alpha > 0.0)) throw ConfigError("augment: mixup alpha must be > 0");
    if (image.size() == 3 && pad > 0 && pad >= std::min(image[1], image[2]))
        throw ConfigError("augment: pad " + std::to_string(pad) + " >= min(H, W) of image " +
                          shape_string(image));
}

AugmentKind parse_augment_kind(const std::string& name) {
    if (name == "identity") return AugmentKind::identity;
    if (name == "crop_flip") return AugmentKind::crop_flip;
    if (name == "gaussian_noise") return AugmentKind::gaussian_noise;
    if (name == "randaugment") return AugmentKind::randaugment;
    if (name == "mixup") return AugmentKind::mixup;
    throw ConfigError("unknown augmentation kind '" + name + "'");
}

std::string to_string(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::identity: return "identity";
        case AugmentKind::crop_flip: return "crop_flip";
        case AugmentKind::gaussian_noise: return "gaussian_noise";
        case AugmentKind::randaugment: return "randaugment";
        case AugmentKind::mixup: return "mixup";
    }
    return "?";
}

// ---- apply / views -------------------------------------------------------------------

ImageBatch apply(const AugmentSpec& spec, const ImageBatch& batch, Rng& rng) {
    const Shape chw = batch.image_shape();
    spec.validate(chw);
    if (spec.kind == AugmentKind::identity && !spec.has_crop_stage()) return batch;
    if (spec.kind == AugmentKind::mixup)
        throw ConfigError("augment: mixup changes labels; use mixup_batch");

    const std::size_t stride = shape_numel(chw);
    std::vector<double> pixels(batch.pixels.data().begin(), batch.pixels.data().end());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto image = image_at(pixels, i, stride);
        if (spec.has_crop_stage()) crop_flip_image(image, chw, spec.pad, draw_crop(spec, rng));
        apply_main(spec, image, chw, rng);
    }
    return {Tensor::from(batch.pixels.shape(), std::move(pixels)), batch.labels};
}

ViewPair make_views(const AugmentSpec& spec1, const AugmentSpec& spec2, const ImageBatch& batch,
                    CropMode crop_mode, Rng& rng) {
    if (spec1.kind == AugmentKind::mixup || spec2.kind == AugmentKind::mixup)
        throw ConfigError("make_views: mixup is not label-preserving; use tied_mixup_loss");
    if (crop_mode == CropMode::independent) {
        ImageBatch v1 = apply(spec1, batch, rng);
        ImageBatch v2 = apply(spec2, batch, rng);
        return {std::move(v1), std::move(v2), crop_mode};
    }

    if (spec1.pad != spec2.pad || spec1.flip_prob != spec2.flip_prob)
        throw ConfigError("make_views: shared crop needs identical pad and flip_prob on both views");
    const Shape chw = batch.image_shape();
    spec1.validate(chw);
    spec2.validate(chw);
    const std::size_t stride = shape_numel(chw);

    std::vector<double> cropped(batch.pixels.data().begin(), batch.pixels.data().end());
    if (spec1.has_crop_stage())
        for (std::size_t i = 0; i < batch.size(); ++i)
            crop_flip_image(image_at(cropped, i, stride), chw, spec1.pad, draw_crop(spec1, rng));

    std::vector<double> p1 = cropped;
    for (std::size_t i = 0; i < batch.size(); ++i) apply_main(spec1, image_at(p1, i, stride), chw, rng);
    std::vector<double> p2 = std::move(cropped);
    for (std::size_t i = 0; i < batch.size(); ++i) apply_main(spec2, image_at(p2, i, stride), chw, rng);
    return {{Tensor::from(batch.pixels.shape(), std::move(p1)), batch.labels},
            {Tensor::from(batch.pixels.shape(), std::move(p2)), batch.labels},
            crop_mode};
}

// ---- mixup ------------------------------------------------------------------------

double sample_beta(double alpha, double beta, Rng& rng) {
    const double x = std::gamma_distribution<double>(alpha, 1.0)(rng);
    const double y = std::gamma_distribution<double>(beta, 1.0)(rng);
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

Tensor mix_pixels(const Tensor& a, const Tensor& b, double lambda) {
    if (a.shape() != b.shape())
        throw ContractError("mix_pixels: shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * x[i] + (1.0 - lambda) * y[i];
    return Tensor::from(a.shape(), std::move(out));
}

MixupBatch mix_with(const ImageBatch& batch, double lambda, std::vector<std::size_t> permutation) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("mixup: lambda outside [0,1]");
    if (permutation.size() != batch.size()) throw ContractError("mixup: permutation length mismatch");
    ImageBatch partner = batch.select(permutation);
    MixupBatch out;
    out.mixed = mix_pixels(batch.pixels, partner.pixels, lambda);
    out.partner = partner.pixels;
    out.labels1 = batch.labels;
    out.labels2 = std::move(partner.labels);
    out.lambda = lambda;
    out.permutation = std::move(permutation);
    return out;
}

MixupBatch mixup_batch(const ImageBatch& batch, double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw ContractError("mixup: alpha must be > 0");
    if (batch.size() < 2) throw ContractError("mixup: batch needs at least 2 examples");
    const double lambda = sample_beta(alpha, alpha, rng);
    std::vector<std::size_t> perm(batch.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    return mix_with(batch, lambda, std::move(perm));
}

// ---- randaugment ops -----------------------------------------------------------------

namespace augment_ops {

void brightness(std::span<double> image, double strength, Rng& rng) {
    const double factor = 1.0 + 0.9 * strength * random_sign(rng);
    for (double& v : image) v = clamp01(v * factor);
}

void contrast(std::span<double> image, double strength, Rng& rng) {
    const double factor = 1.0 + 0.9 * strength * random_sign(rng);
    const double mu = std::accumulate(image.begin(), image.end(), 0.0) / static_cast<double>(image.size());
    for (double& v : image) v = clamp01(mu + (v - mu) * factor);
}

void invert(std::span<double> image) {
    for (double& v : image) v = 1.0 - v;
}

namespace {

void translate(std::span<double> image, const Shape& chw, std::ptrdiff_t dy, std::ptrdiff_t dx) {
    const std::size_t c = chw[0], h = chw[1], w = chw[2];
    std::vector<double> src(image.begin(), image.end());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const auto si = static_cast<std::ptrdiff_t>(i) - dy;
                const auto sj = static_cast<std::ptrdiff_t>(j) - dx;
                double v = kFillValue;
                if (si >= 0 && sj >= 0 && si < static_cast<std::ptrdiff_t>(h) &&
                    sj < static_cast<std::ptrdiff_t>(w))
                    v = src[(ch * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)];
                image[(ch * h + i) * w + j] = v;
            }
}

}  // namespace

void translate_x(std::span<double> image, const Shape& chw, double strength, Rng& rng) {
    const auto shift = static_cast<std::ptrdiff_t>(std::lround(0.45 * strength * static_cast<double>(chw[2])));
    translate(image, chw, 0, shift * static_cast<std::ptrdiff_t>(random_sign(rng)));
}

void translate_y(std::span<double> image, const Shape& chw, double strength, Rng& rng) {
    const auto shift = static_cast<std::ptrdiff_t>(std::lround(0.45 * strength * static_cast<double>(chw[1])));
    translate(image, chw, shift * static_cast<std::ptrdiff_t>(random_sign(rng)), 0);
}

void cutout(std::span<double> image, const Shape& chw, std::size_t size, Rng& rng) {
    const std::size_t c = chw[0], h = chw[1], w = chw[2];
    size = std::min({size, h, w});
    if (size == 0) return;
    const auto top = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - size)));
    const auto left = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - size)));
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = top; i < top + size; ++i)
            for (std::size_t j = left; j < left + size; ++j) image[(ch * h + i) * w + j] = kFillValue;
}

}  // namespace augment_ops

}  // namespace tiedaug
