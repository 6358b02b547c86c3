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
#include "ihd/ihd.h"

#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "error.hpp"
#include "pipeline.hpp"

struct ihd_pipeline {
  ihd::PipelineConfig config;
  ihd_log_fn log_fn = nullptr;
  void *log_user = nullptr;
  std::string config_json;

  ihd::LogFn Log() const {
    if (!log_fn) return {};
    return [fn = log_fn, user = log_user](const std::string &line) {
      fn(line.c_str(), user);
    };
  }
};

namespace {

thread_local std::string g_last_error;

ihd_status Fail(ihd_status status, const std::string &message) {
  g_last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
ihd_status Guard(F &&body) {
  try {
    g_last_error.clear();
    body();
    return IHD_OK;
  } catch (const ihd::FormatError &e) {
    return Fail(IHD_ERR_FORMAT, e.what());
  } catch (const ihd::ValidationError &e) {
    return Fail(IHD_ERR_VALIDATION, e.what());
  } catch (const ihd::RuntimeError &e) {
    return Fail(IHD_ERR_RUNTIME, e.what());
  } catch (const std::bad_alloc &) {
    return Fail(IHD_ERR_RUNTIME, "out of memory");
  } catch (const std::filesystem::filesystem_error &e) {
    return Fail(IHD_ERR_RUNTIME, e.what());
  } catch (const std::exception &e) {
    return Fail(IHD_ERR_INTERNAL, e.what());
  } catch (...) {
    return Fail(IHD_ERR_INTERNAL, "unknown exception");
  }
}

#define IHD_REQUIRE(ptr)                                                  \
  do {                                                                    \
    if ((ptr) == nullptr)                                                 \
      return Fail(IHD_ERR_INVALID_ARGUMENT, #ptr " must not be null");    \
  } while (0)

double OrNan(const std::optional<double> &v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

void FillLevel(const ihd::LevelReport &in, ihd_level_metrics &out) {
  out.samples = in.samples;
  out.weighted_log_loss = in.weighted_log_loss;
  for (std::size_t k = 0; k < ihd::kNumClasses; ++k) {
    const auto &c = in.classes[k];
    out.auc[k] = OrNan(c.auc);
    out.accuracy[k] = c.threshold.accuracy;
    out.sensitivity[k] = OrNan(c.threshold.sensitivity);
    out.specificity[k] = OrNan(c.threshold.specificity);
    out.log_loss[k] = c.log_loss;
  }
}

}  // namespace

extern "C" {

const char *ihd_version(void) { return "1.0.0"; }

const char *ihd_status_name(ihd_status status) {
  switch (status) {
    case IHD_OK: return "ok";
    case IHD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case IHD_ERR_VALIDATION: return "validation error";
    case IHD_ERR_FORMAT: return "format error";
    case IHD_ERR_RUNTIME: return "runtime error";
    case IHD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char *ihd_last_error(void) { return g_last_error.c_str(); }

ihd_status ihd_pipeline_open(const char *config_path, ihd_pipeline **out) {
  IHD_REQUIRE(config_path);
  IHD_REQUIRE(out);
  *out = nullptr;
  return Guard([&] {
    auto p = std::make_unique<ihd_pipeline>();
    p->config = ihd::LoadConfig(config_path);
    *out = p.release();
  });
}

ihd_status ihd_pipeline_open_json(const char *json, const char *base_dir,
                                  ihd_pipeline **out) {
  IHD_REQUIRE(json);
  IHD_REQUIRE(base_dir);
  IHD_REQUIRE(out);
  *out = nullptr;
  return Guard([&] {
    auto p = std::make_unique<ihd_pipeline>();
    p->config = ihd::ParseConfig(json, base_dir);
    *out = p.release();
  });
}

void ihd_pipeline_close(ihd_pipeline *pipeline) { delete pipeline; }

ihd_status ihd_pipeline_set_seed(ihd_pipeline *pipeline, uint64_t seed) {
  IHD_REQUIRE(pipeline);
  return Guard([&] { ihd::OverrideSeeds(pipeline->config, seed); });
}

ihd_status ihd_pipeline_set_work_dir(ihd_pipeline *pipeline, const char *dir) {
  IHD_REQUIRE(pipeline);
  IHD_REQUIRE(dir);
  if (*dir == '\0') return Fail(IHD_ERR_INVALID_ARGUMENT, "work dir must not be empty");
  return Guard([&] { pipeline->config.work_dir = dir; });
}

ihd_status ihd_pipeline_set_log(ihd_pipeline *pipeline, ihd_log_fn fn, void *user) {
  IHD_REQUIRE(pipeline);
  pipeline->log_fn = fn;
  pipeline->log_user = user;
  return IHD_OK;
}

const char *ihd_pipeline_config_json(ihd_pipeline *pipeline) {
  if (pipeline == nullptr) {
    Fail(IHD_ERR_INVALID_ARGUMENT, "pipeline must not be null");
    return nullptr;
  }
  pipeline->config_json = ihd::DumpConfig(pipeline->config);
  return pipeline->config_json.c_str();
}

ihd_status ihd_synth(ihd_pipeline *pipeline, size_t n_scans) {
  IHD_REQUIRE(pipeline);
  return Guard([&] {
    ihd::RunSynth(pipeline->config, n_scans == 0 ? pipeline->config.synth_scans : n_scans,
                  pipeline->Log());
  });
}

ihd_status ihd_train_cnn(ihd_pipeline *pipeline) {
  IHD_REQUIRE(pipeline);
  return Guard([&] { ihd::RunTrainCnn(pipeline->config, pipeline->Log()); });
}

ihd_status ihd_extract(ihd_pipeline *pipeline) {
  IHD_REQUIRE(pipeline);
  return Guard([&] { ihd::RunExtract(pipeline->config, pipeline->Log()); });
}

ihd_status ihd_fit_selector(ihd_pipeline *pipeline) {
  IHD_REQUIRE(pipeline);
  return Guard([&] { ihd::RunFitSelector(pipeline->config, pipeline->Log()); });
}

ihd_status ihd_train_lstm(ihd_pipeline *pipeline, double *train_seconds) {
  IHD_REQUIRE(pipeline);
  return Guard([&] {
    const auto info = ihd::RunTrainLstm(pipeline->config, pipeline->Log());
    if (train_seconds) *train_seconds = info.train_seconds;
  });
}

ihd_status ihd_predict(ihd_pipeline *pipeline, const char *split) {
  IHD_REQUIRE(pipeline);
  return Guard([&] {
    ihd::RunPredict(pipeline->config, split ? split : "test", pipeline->Log());
  });
}

ihd_status ihd_evaluate(ihd_pipeline *pipeline, const char *predictions,
                        ihd_eval_metrics *out) {
  IHD_REQUIRE(pipeline);
  return Guard([&] {
    std::optional<std::filesystem::path> path;
    if (predictions) path = predictions;
    const auto report = ihd::RunEvaluate(pipeline->config, path, pipeline->Log());
    if (out) {
      FillLevel(report.slice, out->slice);
      FillLevel(report.scan, out->scan);
    }
  });
}

ihd_status ihd_gradcam(ihd_pipeline *pipeline, const char *scan_id,
                       const char *const *classes, size_t n_classes,
                       const size_t *slices, size_t n_slices, size_t *n_written) {
  IHD_REQUIRE(pipeline);
  IHD_REQUIRE(scan_id);
  if (n_classes > 0 && classes == nullptr)
    return Fail(IHD_ERR_INVALID_ARGUMENT, "classes must not be null");
  if (n_slices > 0 && slices == nullptr)
    return Fail(IHD_ERR_INVALID_ARGUMENT, "slices must not be null");
  return Guard([&] {
    ihd::GradcamRequest request;
    request.scan_id = scan_id;
    for (size_t i = 0; i < n_classes; ++i) {
      IHD_CHECK(classes[i] != nullptr, ihd::ValidationError, "class name ", i,
                " is null");
      request.classes.emplace_back(classes[i]);
    }
    request.slices.assign(slices, slices + n_slices);
    const auto written = ihd::RunGradcam(pipeline->config, request, pipeline->Log());
    if (n_written) *n_written = written.size();
  });
}

}  // extern "C"
