// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tiedaug/tensor.hpp"

namespace tiedaug {

enum class ModelKind { mlp, small_conv };
enum class Activation { relu, tanh, identity };

struct ModelSpec {
    ModelKind kind = ModelKind::mlp;
    Shape input{1, 1, 2};  // per-example C×H×W
    std::vector<std::size_t> hidden;                 // mlp: widths before the feature layer
    std::vector<std::size_t> conv_channels{4, 8};   // small_conv: exactly two blocks
    std::size_t kernel = 3;
    Activation activation = Activation::relu;
    std::size_t feature_dim = 16;
    std::size_t classes = 2;

    /// Throws ConfigError on invalid dimensions.
    void validate() const;
    std::size_t input_numel() const { return shape_numel(input); }
};

/// The (pre-logit features, logits) pair every forward returns.
struct ModelOutput {
    Tensor features;  // N×F
    Tensor logits;    // N×C
};

struct Parameter {
    std::string name;
    Tensor value;
};

/// Norm-free two-headed network. Parameters are requires_grad leaves, listed in
/// declaration order (that order is also the checkpoint order).
///
/// Move-only: parameter tensors are handles, so an implicit copy would alias.
class Model {
public:
    static Model build(const ModelSpec& spec, std::uint64_t seed);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Model clone() const;

    /// x is N×C×H×W (or N×D with D = product of the input extents). Pixels are
    /// centered (x - 0.5) before the first layer.
    ModelOutput forward(const Tensor& x) const;
    /// Features only; used by the analysis probes.
    Tensor features(const Tensor& x) const { return forward(x).features; }

    const ModelSpec& spec() const noexcept { return spec_; }
    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;
    void zero_grad();

    /// Final affine layer: logits = features · head_weight + head_bias.
    const Tensor& head_weight() const { return params_[params_.size() - 2].value; }
    const Tensor& head_bias() const { return params_.back().value; }

private:
    Model() = default;
    Tensor activate(const Tensor& x) const;
    const Tensor& param(std::size_t i) const { return params_[i].value; }

    ModelSpec spec_;
    std::vector<Parameter> params_;
};

enum class ForwardMode { separate, concatenated };

/// One forward per input (separate), or one forward over the row concatenation
/// split back afterwards (concatenated). Identical results for norm-free models.
std::vector<ModelOutput> forward_views(const Model& model, std::span<const Tensor> inputs, ForwardMode mode);

/// Predicted class per row (first maximal logit).
std::vector<int> argmax_rows(const Tensor& logits);

/// TIEDCKPT1 checkpoint file.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Loads into an already-built model; names, ranks and extents must match
/// (FormatError otherwise).
void load_checkpoint(Model& model, const std::filesystem::path& path);

}  // namespace tiedaug
