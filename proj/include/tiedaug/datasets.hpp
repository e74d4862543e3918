// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tiedaug/augment.hpp"
#include "tiedaug/rng.hpp"

namespace tiedaug {

enum class DatasetKind { blobs, striped_images, binary_file };

DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::blobs;
    std::size_t size = 1000;   // total examples before the 80/20 split (synthetic kinds)
    std::size_t classes = 2;
    Shape image{1, 1, 8};      // per-example C×H×W; blobs use 1×1×d
    double noise = 0.1;        // blobs: cluster std; striped_images: pixel noise std
    std::uint64_t seed = 0;
    std::optional<std::size_t> labels_per_class;
    std::filesystem::path path;       // binary_file: training records
    std::filesystem::path test_path;  // binary_file: optional held-out records

    void validate() const;
};

struct Dataset {
    ImageBatch train;
    ImageBatch test;
};

/// Synthetic data with balanced classes (label i mod C) and a seeded 80/20 split.
///   blobs:          C Gaussian clusters around centers drawn in [0.2, 0.8]^d
///   striped_images: vertical sinusoidal stripes at frequency (class + 1) cycles per
///                   width, random phase, additive pixel noise
/// Pixels are clamped to [0,1].
Dataset generate(const DatasetSpec& spec);

/// generate() for synthetic kinds; read_binary (+ split when no test_path) for files.
Dataset load_dataset(const DatasetSpec& spec);

struct LabelSplit {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
};

/// Exactly `per_class` labeled indices per class (seeded), the rest unlabeled.
/// Both lists are sorted ascending.
LabelSplit subset_labels(const ImageBatch& train, std::size_t per_class, std::size_t classes, Rng& rng);

/// Records of [1 label byte][C·H·W pixel bytes]; pixels scaled by 1/255.
ImageBatch read_binary(const std::filesystem::path& path, const Shape& image, std::size_t classes);
/// Inverse of read_binary; pixels are rounded to the nearest of k/255.
void write_binary(const ImageBatch& batch, const std::filesystem::path& path);

/// Label-budget file: one example index per line.
std::vector<std::size_t> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::vector<std::size_t>& indices, const std::filesystem::path& path);

}  // namespace tiedaug
