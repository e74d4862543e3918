// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tiedaug/analysis.hpp"
#include "tiedaug/datasets.hpp"
#include "tiedaug/optim.hpp"
#include "tiedaug/semisup.hpp"
#include "tiedaug/tied_loss.hpp"

namespace tiedaug {

struct MixupSettings {
    double alpha = 1.0;
    double tied_weight = 4.0;
};

struct FixMatchSettings {
    FixMatchConfig config;
    std::filesystem::path label_file;  // optional; otherwise dataset.labels_per_class
};

enum class TrainingMode { tied, mixup, fixmatch };

struct ExperimentConfig {
    DatasetSpec dataset;
    ModelSpec model;
    std::uint64_t model_seed = 0;  // mixed with the run seed for initialization
    AugmentSpec augment1 = AugmentSpec::crop_flip();
    AugmentSpec augment2 = AugmentSpec::crop_flip();
    CropMode crop_mode = CropMode::independent;
    TiedLossConfig tied;
    SgdConfig optimizer;
    std::optional<SamConfig> sam;
    std::optional<FixMatchSettings> fixmatch;
    std::optional<MixupSettings> mixup;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::vector<std::uint64_t> seeds{0};
    ForwardMode forward_mode = ForwardMode::separate;
    bool log_wall_time = false;  // wall_ms is written as 0 unless enabled
    std::size_t threads = 1;     // seeds trained concurrently
    TaylorCheckConfig taylor;

    TrainingMode mode() const;
    /// Throws ConfigError; called before any training starts.
    void validate() const;
};

/// Flat `section.key = value` text, '#' comments, blank lines ignored.
/// Unknown keys and malformed values are ConfigErrors naming the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every accepted key, in documentation order.
const std::vector<std::string>& config_keys();

struct MetricsRow {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double train_total = 0.0;
    double ce1 = 0.0;
    std::optional<double> ce2;
    double similarity_penalty = 0.0;
    double feature_distance_l2 = 0.0;
    std::optional<double> mask_rate;
    double test_accuracy = 0.0;
    double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "seed,epoch,train_total,ce1,ce2,similarity_penalty,feature_distance_l2,mask_rate,test_accuracy,wall_ms";

std::string format_metrics_row(const MetricsRow& row);
void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<MetricsRow> rows;  // one per epoch
    /// Per optimizer step, the total loss; used for trajectory comparisons.
    std::vector<double> step_losses;
    Model model;
};

/// One replica, fully determined by (cfg, seed). The dataset is passed in so
/// callers can share it across seeds.
SeedRun train_seed(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed);

struct TrainSummary {
    std::vector<MetricsRow> rows;                   // seed order, then epoch
    std::vector<double> final_accuracy;             // per seed, configured order
};

/// Trains every seed; when out_dir is set writes out_dir/seed_<s>/{metrics.csv,model.ckpt}
/// and the merged out_dir/metrics.csv.
TrainSummary train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir);

/// Argmax accuracy of `model` on `split`.
double accuracy(const Model& model, const ImageBatch& split);

/// Loads the checkpoint into a model built from cfg.model and scores the test split.
double evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

struct GradCheckTrial {
    std::string description;
    double max_relative_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckTrial> trials;
    double max_relative_error = 0.0;
};

/// Random (model, loss) draws cycling through tied_loss (l2/l1/cosine × w in {-4, 0, 4}),
/// tied_mixup_loss and tied_fixmatch_loss; central differences in float64.
GradCheckReport run_grad_check(std::size_t trials, std::uint64_t seed);

/// Probes drawn uniformly in [0,1] from taylor.seed; model from cfg.model / model_seed.
TaylorCheckReport verify_taylor(const ExperimentConfig& cfg);
void write_taylor_csv(const TaylorCheckReport& report, const std::filesystem::path& path);

/// Writes the generated train split to `out`, the test split to `out`.test and,
/// when a label budget is configured, the labeled indices to `out`.labels.
void make_data(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Labeled/unlabeled split for fixmatch runs: label file when given, else a
/// class-balanced budget drawn from the dataset seed.
LabelSplit labeled_split(const ExperimentConfig& cfg, const ImageBatch& train);

}  // namespace tiedaug
