// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through the C interface.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tiedaug/tiedaug.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

constexpr double kGradTolerance = 1e-4;

int exit_code(tiedaug_status status) {
    switch (status) {
        case TIEDAUG_OK:
            return kExitOk;
        case TIEDAUG_ERR_CONFIG:
            return kExitConfig;
        case TIEDAUG_ERR_IO:
        case TIEDAUG_ERR_FORMAT:
            return kExitIo;
        case TIEDAUG_ERR_NUMERIC:
        case TIEDAUG_ERR_CONTRACT:
        case TIEDAUG_ERR_INTERNAL:
            break;
    }
    return kExitNumeric;
}

int report(tiedaug_status status) {
    if (status != TIEDAUG_OK) std::fprintf(stderr, "error: %s\n", tiedaug_last_error());
    return exit_code(status);
}

using ExperimentPtr = std::unique_ptr<tiedaug_experiment, decltype(&tiedaug_experiment_free)>;

tiedaug_status load(const std::string& path, ExperimentPtr& out) {
    tiedaug_experiment* raw = nullptr;
    const tiedaug_status status = tiedaug_experiment_load(path.c_str(), &raw);
    out.reset(raw);
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tied-Augment training and verification tools"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", std::string(tiedaug_version()));

    std::string config, out, checkpoint;
    std::uint32_t trials = 22;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "Train every configured seed and write metrics and checkpoints");
    train->add_option("--config", config, "Config file")->required();
    train->add_option("--out", out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Test accuracy of a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "TIEDCKPT1 checkpoint")->required();
    eval->add_option("--config", config, "Config file describing model and dataset")->required();

    auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient check over random model/loss draws");
    grad->add_option("--trials", trials, "Number of random draws")->check(CLI::PositiveNumber);
    grad->add_option("--seed", seed, "Seed for the draws");

    auto* taylor = app.add_subcommand("verify-taylor", "Compare the noise tied penalty with its Jacobian prediction");
    taylor->add_option("--config", config, "Config file")->required();
    taylor->add_option("--out", out, "CSV output path")->required();

    auto* data = app.add_subcommand("make-data", "Write the configured dataset as binary records");
    data->add_option("--config", config, "Config file")->required();
    data->add_option("--out", out, "Output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    ExperimentPtr experiment(nullptr, &tiedaug_experiment_free);

    if (*train) {
        if (const auto s = load(config, experiment); s != TIEDAUG_OK) return report(s);
        std::vector<double> accuracy(tiedaug_experiment_seed_count(experiment.get()));
        const auto s = tiedaug_train(experiment.get(), out.c_str(), accuracy.data(), accuracy.size());
        if (s != TIEDAUG_OK) return report(s);
        for (std::size_t i = 0; i < accuracy.size(); ++i)
            std::printf("seed #%zu final test accuracy %.6f\n", i, accuracy[i]);
        std::printf("metrics written to %s/metrics.csv\n", out.c_str());
        return kExitOk;
    }
    if (*eval) {
        if (const auto s = load(config, experiment); s != TIEDAUG_OK) return report(s);
        double accuracy = 0.0;
        const auto s = tiedaug_evaluate(experiment.get(), checkpoint.c_str(), &accuracy);
        if (s != TIEDAUG_OK) return report(s);
        std::printf("accuracy %.17g\n", accuracy);
        return kExitOk;
    }
    if (*grad) {
        double worst = 0.0;
        const auto s = tiedaug_grad_check(trials, seed, &worst);
        if (s != TIEDAUG_OK) return report(s);
        std::printf("max relative error %.3e over %u draws (tolerance %.0e)\n", worst, trials, kGradTolerance);
        if (!(worst <= kGradTolerance)) {
            std::fprintf(stderr, "error: gradient check exceeded tolerance\n");
            return kExitNumeric;
        }
        return kExitOk;
    }
    if (*taylor) {
        if (const auto s = load(config, experiment); s != TIEDAUG_OK) return report(s);
        int consistent = 0;
        const auto s = tiedaug_verify_taylor(experiment.get(), out.c_str(), &consistent);
        if (s != TIEDAUG_OK) return report(s);
        std::printf("rows written to %s; %s\n", out.c_str(), consistent ? "consistent" : "INCONSISTENT");
        return consistent ? kExitOk : kExitNumeric;
    }
    if (*data) {
        if (const auto s = load(config, experiment); s != TIEDAUG_OK) return report(s);
        return report(tiedaug_make_data(experiment.get(), out.c_str()));
    }
    return kExitConfig;
}
