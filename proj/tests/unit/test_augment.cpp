// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "tiedaug/augment.hpp"
#include "tiedaug/errors.hpp"

using namespace tiedaug;

namespace {

ImageBatch random_batch(std::size_t n, Shape chw, std::uint64_t seed, int classes = 3) {
    Rng rng(seed);
    Shape shape{n};
    shape.insert(shape.end(), chw.begin(), chw.end());
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = uniform01(rng);
    ImageBatch b{Tensor::from(shape, std::move(v)), {}};
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % classes));
    return b;
}

bool same_pixels(const ImageBatch& a, const ImageBatch& b) {
    return a.pixels.shape() == b.pixels.shape() &&
           std::equal(a.pixels.data().begin(), a.pixels.data().end(), b.pixels.data().begin());
}

}  // namespace

TEST_CASE("identity and zero noise return the batch unchanged") {
    const ImageBatch b = random_batch(4, {1, 4, 4}, 1);
    Rng rng(2);
    CHECK(same_pixels(apply(AugmentSpec::identity(), b, rng), b));
    CHECK(same_pixels(apply(AugmentSpec::gaussian_noise(0.0), b, rng), b));
    CHECK(same_pixels(apply(AugmentSpec::crop_flip(0, 0.0), b, rng), b));
    CHECK(same_pixels(apply(AugmentSpec::randaugment(2, 14, 0.0), b, rng), b));
}

TEST_CASE("cutout 2x2 on an all-ones 4x4 image") {
    std::vector<double> image(16, 1.0);
    Rng rng(3);
    augment_ops::cutout(image, {1, 4, 4}, 2, rng);
    CHECK(std::count(image.begin(), image.end(), 0.5) == 4);
    CHECK(std::count(image.begin(), image.end(), 1.0) == 12);
}

TEST_CASE("every kind preserves shape and labels and stays in range") {
    const ImageBatch b = random_batch(8, {3, 6, 6}, 4);
    for (const AugmentSpec& spec : {AugmentSpec::crop_flip(2, 0.5), AugmentSpec::gaussian_noise(0.4),
                                    AugmentSpec::randaugment(3, 30, 1.0)}) {
        Rng rng(5);
        const ImageBatch out = apply(spec, b, rng);
        CHECK(out.pixels.shape() == b.pixels.shape());
        CHECK(out.labels == b.labels);
        for (double v : out.pixels.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("apply is deterministic for a given stream") {
    const ImageBatch b = random_batch(5, {1, 5, 5}, 6);
    const AugmentSpec spec = AugmentSpec::randaugment(2, 20, 0.7);
    Rng r1(9), r2(9);
    CHECK(same_pixels(apply(spec, b, r1), apply(spec, b, r2)));
}

TEST_CASE("pad at least the image side is a config error") {
    const ImageBatch b = random_batch(2, {1, 4, 4}, 7);
    Rng rng(1);
    CHECK_THROWS_AS((void)apply(AugmentSpec::crop_flip(4, 0.5), b, rng), ConfigError);
    CHECK_THROWS_AS(AugmentSpec::gaussian_noise(-1.0).validate({1, 4, 4}), ConfigError);
    CHECK_THROWS_AS(AugmentSpec::randaugment(0, 10).validate({1, 4, 4}), ConfigError);
    CHECK_THROWS_AS(AugmentSpec::randaugment(1, 10, 1.5).validate({1, 4, 4}), ConfigError);
}

TEST_CASE("make_views") {
    const ImageBatch b = random_batch(6, {3, 8, 8}, 8);
    Rng rng(10);
    SUBCASE("identity views match") {
        const auto v = make_views(AugmentSpec::identity(), AugmentSpec::identity(), b, CropMode::independent, rng);
        CHECK(same_pixels(v.view1, v.view2));
    }
    SUBCASE("shared crop with nothing else gives equal views") {
        const auto v = make_views(AugmentSpec::crop_flip(), AugmentSpec::crop_flip(), b, CropMode::shared, rng);
        CHECK(same_pixels(v.view1, v.view2));
        CHECK_FALSE(same_pixels(v.view1, b));
    }
    SUBCASE("independent crops differ") {
        const auto v = make_views(AugmentSpec::crop_flip(), AugmentSpec::crop_flip(), b, CropMode::independent, rng);
        CHECK_FALSE(same_pixels(v.view1, v.view2));
    }
    SUBCASE("crop_flip against randaugment: pixels differ, labels equal") {
        const auto v =
            make_views(AugmentSpec::crop_flip(), AugmentSpec::randaugment(2, 14), b, CropMode::independent, rng);
        CHECK_FALSE(same_pixels(v.view1, v.view2));
        CHECK(v.view1.labels == v.view2.labels);
        CHECK(v.view1.labels == b.labels);
    }
    SUBCASE("mixup is rejected") {
        AugmentSpec mix;
        mix.kind = AugmentKind::mixup;
        CHECK_THROWS_AS((void)make_views(mix, AugmentSpec::identity(), b, CropMode::independent, rng), ConfigError);
    }
    SUBCASE("shared crop needs matching crop stages") {
        CHECK_THROWS_AS(
            (void)make_views(AugmentSpec::crop_flip(2), AugmentSpec::crop_flip(1), b, CropMode::shared, rng),
            ConfigError);
    }
}

TEST_CASE("mixup endpoints and midpoint") {
    const ImageBatch b = random_batch(4, {1, 2, 2}, 11);
    const auto one = mix_with(b, 1.0, {3, 2, 1, 0});
    CHECK(same_pixels(ImageBatch{one.mixed, b.labels}, b));
    CHECK(one.labels2 == std::vector<int>{0, 2, 1, 0});

    ImageBatch zo{Tensor::from({2, 1, 1, 2}, {0, 0, 1, 1}), {0, 1}};
    const auto half = mix_with(zo, 0.5, {1, 0});
    for (double v : half.mixed.data()) CHECK(v == 0.5);
}

TEST_CASE("mixup_batch draws a permutation and lambda in [0,1]") {
    const ImageBatch b = random_batch(10, {1, 3, 3}, 12);
    Rng rng(13);
    const auto m = mixup_batch(b, 0.4, rng);
    auto sorted = m.permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
    CHECK(m.lambda >= 0.0);
    CHECK(m.lambda <= 1.0);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(m.labels2[i] == b.labels[m.permutation[i]]);
}

TEST_CASE("Beta(0.2, 0.2) has mean 0.5 over 10000 draws") {
    Rng rng(14);
    double total = 0.0;
    for (int i = 0; i < 10000; ++i) total += sample_beta(0.2, 0.2, rng);
    CHECK(std::fabs(total / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("ops keep images in range") {
    Rng rng(15);
    std::vector<double> image(3 * 4 * 4);
    for (double& v : image) v = uniform01(rng);
    const Shape chw{3, 4, 4};
    augment_ops::brightness(image, 1.0, rng);
    augment_ops::contrast(image, 1.0, rng);
    augment_ops::translate_x(image, chw, 1.0, rng);
    augment_ops::translate_y(image, chw, 1.0, rng);
    for (double v : image) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    std::vector<double> inv{0.0, 0.25, 1.0};
    augment_ops::invert(inv);
    CHECK(inv == std::vector<double>{1.0, 0.75, 0.0});
}

TEST_CASE("parse_augment_kind round trips and rejects unknown names") {
    for (auto k : {AugmentKind::identity, AugmentKind::crop_flip, AugmentKind::gaussian_noise, AugmentKind::randaugment,
                   AugmentKind::mixup})
        CHECK(parse_augment_kind(to_string(k)) == k);
    CHECK_THROWS_AS((void)parse_augment_kind("rotate"), ConfigError);
}
