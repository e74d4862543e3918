// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tiedaug/errors.hpp"

namespace tiedaug {

namespace {

ImageBatch make_batch(const Shape& image, std::vector<double> pixels, std::vector<int> labels) {
    Shape shape{labels.size()};
    shape.insert(shape.end(), image.begin(), image.end());
    return {Tensor::from(std::move(shape), std::move(pixels)), std::move(labels)};
}

Dataset split_80_20(const ImageBatch& all, Rng& rng) {
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = (all.size() * 4) / 5;
    const std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {all.select(train), all.select(test)};
}

}  // namespace

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "blobs") return DatasetKind::blobs;
    if (name == "striped_images") return DatasetKind::striped_images;
    if (name == "binary_file") return DatasetKind::binary_file;
    throw ConfigError("unknown dataset kind '" + name + "'");
}

void DatasetSpec::validate() const {
    if (classes < 2) throw ConfigError("dataset: classes must be >= 2");
    if (classes > 256) throw ConfigError("dataset: at most 256 classes fit the label byte");
    if (image.size() != 3 || image[0] == 0 || image[1] == 0 || image[2] == 0)
        throw ConfigError("dataset: image must be three positive extents, got " + shape_string(image));
    if (!(noise >= 0.0)) throw ConfigError("dataset: noise must be >= 0");
    if (kind == DatasetKind::binary_file) {
        if (path.empty()) throw ConfigError("dataset: binary_file needs dataset.path");
        return;
    }
    if (size < classes) throw ConfigError("dataset: size must be >= classes");
    if (kind == DatasetKind::blobs && (image[0] != 1 || image[1] != 1))
        throw ConfigError("dataset: blobs are 1×1×d images");
    if (kind == DatasetKind::striped_images && classes > image[2] / 2)
        throw ConfigError("dataset: striped_images supports at most W/2 classes");
    if (labels_per_class && *labels_per_class * classes > size)
        throw ConfigError("dataset: labels_per_class * classes exceeds dataset size");
}

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    if (spec.kind == DatasetKind::binary_file) throw ConfigError("generate: binary_file is not synthetic");
    Rng rng(spec.seed);
    const std::size_t per = shape_numel(spec.image);
    std::vector<double> pixels(spec.size * per);
    std::vector<int> labels(spec.size);

    if (spec.kind == DatasetKind::blobs) {
        std::vector<double> centers(spec.classes * per);
        for (double& c : centers) c = uniform(rng, 0.2, 0.8);
        for (std::size_t i = 0; i < spec.size; ++i) {
            const std::size_t k = i % spec.classes;
            labels[i] = static_cast<int>(k);
            for (std::size_t d = 0; d < per; ++d) {
                const double v = centers[k * per + d] + spec.noise * standard_normal(rng);
                pixels[i * per + d] = std::clamp(v, 0.0, 1.0);
            }
        }
    } else {
        const std::size_t c = spec.image[0], h = spec.image[1], w = spec.image[2];
        for (std::size_t i = 0; i < spec.size; ++i) {
            const std::size_t k = i % spec.classes;
            labels[i] = static_cast<int>(k);
            const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            const double freq = static_cast<double>(k + 1) / static_cast<double>(w);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t r = 0; r < h; ++r)
                    for (std::size_t col = 0; col < w; ++col) {
                        const double stripe =
                            0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(col) + phase);
                        const double v = stripe + spec.noise * standard_normal(rng);
                        pixels[i * per + (ch * h + r) * w + col] = std::clamp(v, 0.0, 1.0);
                    }
        }
    }
    const ImageBatch all = make_batch(spec.image, std::move(pixels), std::move(labels));
    return split_80_20(all, rng);
}

Dataset load_dataset(const DatasetSpec& spec) {
    if (spec.kind != DatasetKind::binary_file) return generate(spec);
    spec.validate();
    ImageBatch train = read_binary(spec.path, spec.image, spec.classes);
    if (!spec.test_path.empty()) return {std::move(train), read_binary(spec.test_path, spec.image, spec.classes)};
    Rng rng(spec.seed);
    return split_80_20(train, rng);
}

LabelSplit subset_labels(const ImageBatch& train, std::size_t per_class, std::size_t classes, Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const int label = train.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes)
            throw ContractError("subset_labels: label out of range at index " + std::to_string(i));
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }
    LabelSplit split;
    for (std::size_t k = 0; k < classes; ++k) {
        auto& members = by_class[k];
        if (per_class > members.size())
            throw ConfigError("subset_labels: budget " + std::to_string(per_class) + " exceeds the " +
                              std::to_string(members.size()) + " examples of class " + std::to_string(k));
        std::shuffle(members.begin(), members.end(), rng);
        split.labeled.insert(split.labeled.end(), members.begin(),
                             members.begin() + static_cast<std::ptrdiff_t>(per_class));
        split.unlabeled.insert(split.unlabeled.end(), members.begin() + static_cast<std::ptrdiff_t>(per_class),
                               members.end());
    }
    std::sort(split.labeled.begin(), split.labeled.end());
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
    return split;
}

ImageBatch read_binary(const std::filesystem::path& path, const Shape& image, std::size_t classes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset file: " + path.string());
    const std::string bytes(std::istreambuf_iterator<char>(f), {});
    const std::size_t per = shape_numel(image);
    const std::size_t record = 1 + per;
    if (bytes.size() % record != 0) {
        const std::size_t offset = bytes.size() - bytes.size() % record;
        throw FormatError("dataset file " + path.string() + " truncated: partial record at byte offset " +
                          std::to_string(offset));
    }
    const std::size_t n = bytes.size() / record;
    std::vector<double> pixels(n * per);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + i * record);
        if (rec[0] >= classes)
            throw FormatError("dataset file " + path.string() + ": record " + std::to_string(i) + " has label " +
                              std::to_string(rec[0]) + " >= " + std::to_string(classes) + " classes");
        labels[i] = rec[0];
        for (std::size_t p = 0; p < per; ++p) pixels[i * per + p] = static_cast<double>(rec[1 + p]) / 255.0;
    }
    return make_batch(image, std::move(pixels), std::move(labels));
}

void write_binary(const ImageBatch& batch, const std::filesystem::path& path) {
    const std::size_t per = shape_numel(batch.image_shape());
    std::string out;
    out.reserve(batch.size() * (1 + per));
    auto pixels = batch.pixels.data();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.labels[i] < 0 || batch.labels[i] > 255)
            throw ContractError("write_binary: label does not fit in a byte at index " + std::to_string(i));
        out.push_back(static_cast<char>(batch.labels[i]));
        for (std::size_t p = 0; p < per; ++p) {
            const double v = std::clamp(pixels[i * per + p], 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open dataset file for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing dataset file: " + path.string());
}

std::vector<std::size_t> read_label_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open label file: " + path.string());
    std::vector<std::size_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream is(line);
        long long v = -1;
        std::string rest;
        if (!(is >> v) || v < 0 || (is >> rest))
            throw FormatError("label file " + path.string() + " line " + std::to_string(line_no) +
                              ": expected one non-negative integer");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

void write_label_file(const std::vector<std::size_t>& indices, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open label file for writing: " + path.string());
    for (std::size_t i : indices) f << i << '\n';
    if (!f) throw IoError("failed writing label file: " + path.string());
}

}  // namespace tiedaug
