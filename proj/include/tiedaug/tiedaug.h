/* Copyright (c) 2026, The Tied-Augment Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the tiedaug library. All functions are safe to call from any
 * thread; a failing call stores a message retrievable with tiedaug_last_error()
 * on the same thread. Handles are opaque and owned by the caller.
 */
#ifndef TIEDAUG_TIEDAUG_H
#define TIEDAUG_TIEDAUG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TIEDAUG_BUILDING)
#    define TIEDAUG_API __declspec(dllexport)
#  else
#    define TIEDAUG_API __declspec(dllimport)
#  endif
#else
#  define TIEDAUG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tiedaug_status {
    TIEDAUG_OK = 0,
    TIEDAUG_ERR_CONFIG = 1,   /* invalid configuration or argument */
    TIEDAUG_ERR_NUMERIC = 2,  /* NaN/Inf or a failed internal check */
    TIEDAUG_ERR_IO = 3,       /* file could not be opened, read or written */
    TIEDAUG_ERR_FORMAT = 4,   /* malformed dataset, checkpoint or label file */
    TIEDAUG_ERR_CONTRACT = 5, /* precondition violated (shape mismatch, ...) */
    TIEDAUG_ERR_INTERNAL = 6
} tiedaug_status;

typedef enum tiedaug_log_level {
    TIEDAUG_LOG_INFO = 0,
    TIEDAUG_LOG_WARNING = 1,
    TIEDAUG_LOG_ERROR = 2
} tiedaug_log_level;

typedef struct tiedaug_experiment tiedaug_experiment;

typedef void (*tiedaug_log_fn)(tiedaug_log_level level, const char* message, void* user_data);

TIEDAUG_API const char* tiedaug_version(void);

/* Message of the last failed call on this thread; empty string if none. */
TIEDAUG_API const char* tiedaug_last_error(void);

/* Routes library log messages to `fn`; NULL restores the default (stderr for warnings). */
TIEDAUG_API void tiedaug_set_log_callback(tiedaug_log_fn fn, void* user_data);

/* Parses a `section.key = value` config file or string. On success *out owns a
 * new handle released with tiedaug_experiment_free. */
TIEDAUG_API tiedaug_status tiedaug_experiment_load(const char* config_path, tiedaug_experiment** out);
TIEDAUG_API tiedaug_status tiedaug_experiment_parse(const char* config_text, tiedaug_experiment** out);
TIEDAUG_API void tiedaug_experiment_free(tiedaug_experiment* experiment);

/* Number of configured seeds. */
TIEDAUG_API size_t tiedaug_experiment_seed_count(const tiedaug_experiment* experiment);

/* Trains every seed and writes out_dir/metrics.csv plus per-seed metrics and
 * checkpoints. final_accuracy may be NULL; otherwise it receives up to
 * `capacity` per-seed final test accuracies in configured seed order. */
TIEDAUG_API tiedaug_status tiedaug_train(const tiedaug_experiment* experiment, const char* out_dir,
                                         double* final_accuracy, size_t capacity);

/* Test-split accuracy of a checkpoint built for the experiment's model. */
TIEDAUG_API tiedaug_status tiedaug_evaluate(const tiedaug_experiment* experiment, const char* checkpoint_path,
                                            double* accuracy);

/* Finite-difference gradient check over `trials` random model/loss draws. */
TIEDAUG_API tiedaug_status tiedaug_grad_check(uint32_t trials, uint64_t seed, double* max_relative_error);

/* Writes the Taylor-check CSV; *consistent is 1 when the report passes its own
 * criterion. A model with non-smooth activations is a config error. */
TIEDAUG_API tiedaug_status tiedaug_verify_taylor(const tiedaug_experiment* experiment, const char* csv_path,
                                                 int* consistent);

/* Writes the dataset as binary records: out_path, out_path.test and, with a
 * label budget, out_path.labels. */
TIEDAUG_API tiedaug_status tiedaug_make_data(const tiedaug_experiment* experiment, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* TIEDAUG_TIEDAUG_H */
