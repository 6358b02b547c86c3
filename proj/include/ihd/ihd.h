/**
 * Copyright 2026 The ihd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef IHD_IHD_H_
#define IHD_IHD_H_

/*
 * C interface to the hemorrhage detection pipeline.
 *
 * A pipeline handle owns a validated configuration. Each stage function
 * reads its inputs from the data root / work directory named in that
 * configuration and writes its outputs there, exactly as the `ihd` CLI does.
 *
 * Every function returns an ihd_status. On failure a description is
 * available from ihd_last_error() on the same thread until the next call.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(IHD_BUILDING_LIBRARY)
#define IHD_API __declspec(dllexport)
#else
#define IHD_API __declspec(dllimport)
#endif
#else
#define IHD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ihd_status {
  IHD_OK = 0,
  IHD_ERR_INVALID_ARGUMENT = 1, /* null pointer or out-of-range argument */
  IHD_ERR_VALIDATION = 2,       /* bad config, missing input, bad labels */
  IHD_ERR_FORMAT = 3,           /* malformed or corrupt input file */
  IHD_ERR_RUNTIME = 4,          /* numerical failure, write failure */
  IHD_ERR_INTERNAL = 5          /* anything unexpected */
} ihd_status;

typedef struct ihd_pipeline ihd_pipeline;

#define IHD_NUM_CLASSES 6

/* Metrics for one evaluation level. Undefined values (a class with a single
 * label value) are NaN. Class order: any, epidural, intraparenchymal,
 * intraventricular, subarachnoid, subdural. */
typedef struct ihd_level_metrics {
  size_t samples;
  double auc[IHD_NUM_CLASSES];
  double accuracy[IHD_NUM_CLASSES];
  double sensitivity[IHD_NUM_CLASSES];
  double specificity[IHD_NUM_CLASSES];
  double log_loss[IHD_NUM_CLASSES];
  double weighted_log_loss;
} ihd_level_metrics;

typedef struct ihd_eval_metrics {
  ihd_level_metrics slice;
  ihd_level_metrics scan; /* per-scan max over slices */
} ihd_eval_metrics;

typedef void (*ihd_log_fn)(const char *line, void *user);

IHD_API const char *ihd_version(void);
IHD_API const char *ihd_status_name(ihd_status status);
IHD_API const char *ihd_last_error(void);

/* Loads and validates a JSON config. Relative paths inside it resolve
 * against the config file's directory. */
IHD_API ihd_status ihd_pipeline_open(const char *config_path, ihd_pipeline **out);
/* Same, from a JSON string; relative paths resolve against `base_dir`. */
IHD_API ihd_status ihd_pipeline_open_json(const char *json, const char *base_dir,
                                          ihd_pipeline **out);
IHD_API void ihd_pipeline_close(ihd_pipeline *pipeline);

/* Replaces every stage seed with one derived from `seed`. */
IHD_API ihd_status ihd_pipeline_set_seed(ihd_pipeline *pipeline, uint64_t seed);
/* Redirects the work directory (all stage outputs and inputs). */
IHD_API ihd_status ihd_pipeline_set_work_dir(ihd_pipeline *pipeline, const char *dir);
/* Progress lines. The default is silence. */
IHD_API ihd_status ihd_pipeline_set_log(ihd_pipeline *pipeline, ihd_log_fn fn,
                                        void *user);
/* The effective configuration as JSON. The string lives until the next call
 * on this handle. */
IHD_API const char *ihd_pipeline_config_json(ihd_pipeline *pipeline);

/* n_scans == 0 uses the configured count. */
IHD_API ihd_status ihd_synth(ihd_pipeline *pipeline, size_t n_scans);
IHD_API ihd_status ihd_train_cnn(ihd_pipeline *pipeline);
IHD_API ihd_status ihd_extract(ihd_pipeline *pipeline);
IHD_API ihd_status ihd_fit_selector(ihd_pipeline *pipeline);
/* `train_seconds` (optional) receives the wall time of the training loop. */
IHD_API ihd_status ihd_train_lstm(ihd_pipeline *pipeline, double *train_seconds);
/* `split` is "train", "val" or "test"; NULL means "test". */
IHD_API ihd_status ihd_predict(ihd_pipeline *pipeline, const char *split);
/* `predictions` NULL means <work>/predictions.csv. `out` is optional. */
IHD_API ihd_status ihd_evaluate(ihd_pipeline *pipeline, const char *predictions,
                                ihd_eval_metrics *out);
/* Writes one PNG per (slice, class). Empty `classes` means all six; empty
 * `slices` means every slice. `n_written` is optional. */
IHD_API ihd_status ihd_gradcam(ihd_pipeline *pipeline, const char *scan_id,
                               const char *const *classes, size_t n_classes,
                               const size_t *slices, size_t n_slices,
                               size_t *n_written);

#ifdef __cplusplus
}
#endif

#endif /* IHD_IHD_H_ */
