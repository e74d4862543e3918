// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/tiedaug.h"

#include <mutex>
#include <new>
#include <string>

#include "tiedaug/errors.hpp"
#include "tiedaug/harness.hpp"
#include "tiedaug/log.hpp"

struct tiedaug_experiment {
    tiedaug::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

tiedaug_status fail(tiedaug_status status, const char* message) {
    g_last_error = message;
    return status;
}

// Maps the library's exception hierarchy onto status codes at the boundary.
template <class F>
tiedaug_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return TIEDAUG_OK;
    } catch (const tiedaug::ConfigError& e) {
        return fail(TIEDAUG_ERR_CONFIG, e.what());
    } catch (const tiedaug::NumericError& e) {
        return fail(TIEDAUG_ERR_NUMERIC, e.what());
    } catch (const tiedaug::IoError& e) {
        return fail(TIEDAUG_ERR_IO, e.what());
    } catch (const tiedaug::FormatError& e) {
        return fail(TIEDAUG_ERR_FORMAT, e.what());
    } catch (const tiedaug::ContractError& e) {
        return fail(TIEDAUG_ERR_CONTRACT, e.what());
    } catch (const std::bad_alloc&) {
        return fail(TIEDAUG_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(TIEDAUG_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(TIEDAUG_ERR_INTERNAL, "unknown exception");
    }
}

tiedaug_status null_argument(const char* name) {
    return fail(TIEDAUG_ERR_CONFIG, (std::string("null argument: ") + name).c_str());
}

}  // namespace

extern "C" {

const char* tiedaug_version(void) { return "1.0.0"; }

const char* tiedaug_last_error(void) { return g_last_error.c_str(); }

void tiedaug_set_log_callback(tiedaug_log_fn fn, void* user_data) {
    if (!fn) {
        tiedaug::set_log_sink({});
        return;
    }
    tiedaug::set_log_sink([fn, user_data](tiedaug::LogLevel level, std::string_view message) {
        const std::string text(message);
        const tiedaug_log_level c_level = level == tiedaug::LogLevel::info      ? TIEDAUG_LOG_INFO
                                          : level == tiedaug::LogLevel::warning ? TIEDAUG_LOG_WARNING
                                                                                : TIEDAUG_LOG_ERROR;
        fn(c_level, text.c_str(), user_data);
    });
}

tiedaug_status tiedaug_experiment_load(const char* config_path, tiedaug_experiment** out) {
    if (!config_path) return null_argument("config_path");
    if (!out) return null_argument("out");
    *out = nullptr;
    return guarded([&] { *out = new tiedaug_experiment{tiedaug::load_config(config_path)}; });
}

tiedaug_status tiedaug_experiment_parse(const char* config_text, tiedaug_experiment** out) {
    if (!config_text) return null_argument("config_text");
    if (!out) return null_argument("out");
    *out = nullptr;
    return guarded([&] { *out = new tiedaug_experiment{tiedaug::parse_config(config_text)}; });
}

void tiedaug_experiment_free(tiedaug_experiment* experiment) { delete experiment; }

size_t tiedaug_experiment_seed_count(const tiedaug_experiment* experiment) {
    return experiment ? experiment->config.seeds.size() : 0;
}

tiedaug_status tiedaug_train(const tiedaug_experiment* experiment, const char* out_dir, double* final_accuracy,
                             size_t capacity) {
    if (!experiment) return null_argument("experiment");
    if (!out_dir) return null_argument("out_dir");
    return guarded([&] {
        const auto summary = tiedaug::train(experiment->config, std::filesystem::path(out_dir));
        if (final_accuracy)
            for (size_t i = 0; i < capacity && i < summary.final_accuracy.size(); ++i)
                final_accuracy[i] = summary.final_accuracy[i];
    });
}

tiedaug_status tiedaug_evaluate(const tiedaug_experiment* experiment, const char* checkpoint_path, double* accuracy) {
    if (!experiment) return null_argument("experiment");
    if (!checkpoint_path) return null_argument("checkpoint_path");
    if (!accuracy) return null_argument("accuracy");
    return guarded([&] { *accuracy = tiedaug::evaluate_checkpoint(experiment->config, checkpoint_path); });
}

tiedaug_status tiedaug_grad_check(uint32_t trials, uint64_t seed, double* max_relative_error) {
    if (!max_relative_error) return null_argument("max_relative_error");
    return guarded([&] { *max_relative_error = tiedaug::run_grad_check(trials, seed).max_relative_error; });
}

tiedaug_status tiedaug_verify_taylor(const tiedaug_experiment* experiment, const char* csv_path, int* consistent) {
    if (!experiment) return null_argument("experiment");
    if (!csv_path) return null_argument("csv_path");
    if (!consistent) return null_argument("consistent");
    return guarded([&] {
        const auto report = tiedaug::verify_taylor(experiment->config);
        tiedaug::write_taylor_csv(report, csv_path);
        *consistent = report.consistent ? 1 : 0;
    });
}

tiedaug_status tiedaug_make_data(const tiedaug_experiment* experiment, const char* out_path) {
    if (!experiment) return null_argument("experiment");
    if (!out_path) return null_argument("out_path");
    return guarded([&] { tiedaug::make_data(experiment->config, out_path); });
}

}  // extern "C"
