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

// ihd: command-line front end over the C API.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ihd/ihd.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void PrintLine(const char *line, void *) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

int ExitCode(ihd_status status) {
  switch (status) {
    case IHD_OK: return 0;
    case IHD_ERR_INVALID_ARGUMENT:
    case IHD_ERR_VALIDATION:
    case IHD_ERR_FORMAT: return kExitUsage;
    default: return kExitRuntime;
  }
}

int Report(ihd_status status) {
  if (status != IHD_OK)
    std::fprintf(stderr, "ihd: %s: %s\n", ihd_status_name(status), ihd_last_error());
  return ExitCode(status);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Intracranial hemorrhage detection pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ihd_version());

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "derive every stage seed from this value");
  app.add_option("--out", out_dir, "override the work directory");

  std::size_t n_scans = 0;
  auto *synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("-n,--n", n_scans, "number of scans (default: config synth.scans)");

  app.add_subcommand("train-cnn", "train the slice encoder");
  app.add_subcommand("extract", "write per-slice embeddings and CNN probabilities");
  app.add_subcommand("fit-selector", "fit the feature selector");
  app.add_subcommand("train-lstm", "train the scan-level BiLSTM");

  std::string split = "test";
  auto *predict = app.add_subcommand("predict", "predict every slice of a split");
  predict->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  std::string predictions;
  auto *evaluate = app.add_subcommand("evaluate", "score predictions against labels");
  evaluate->add_option("--predictions", predictions,
                       "predictions CSV (default: <work>/predictions.csv)");

  std::string scan_id;
  std::vector<std::string> classes;
  std::vector<std::size_t> slices;
  auto *gradcam = app.add_subcommand("gradcam", "write Grad-CAM overlays for one scan");
  gradcam->add_option("--scan", scan_id, "scan id")->required();
  gradcam->add_option("--class", classes, "class names (default: all six)");
  gradcam->add_option("--slice", slices, "slice indices (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  if (synth->parsed() && synth->count("--n") > 0 && n_scans == 0) {
    std::fprintf(stderr, "ihd: usage error: --n must be >= 1\n");
    return kExitUsage;
  }

  ihd_pipeline *p = nullptr;
  if (ihd_status s = ihd_pipeline_open(config_path.c_str(), &p); s != IHD_OK)
    return Report(s);
  struct Closer {
    ihd_pipeline *p;
    ~Closer() { ihd_pipeline_close(p); }
  } closer{p};

  ihd_pipeline_set_log(p, PrintLine, nullptr);
  if (seed) {
    if (ihd_status s = ihd_pipeline_set_seed(p, *seed); s != IHD_OK) return Report(s);
  }
  if (!out_dir.empty()) {
    if (ihd_status s = ihd_pipeline_set_work_dir(p, out_dir.c_str()); s != IHD_OK)
      return Report(s);
  }

  ihd_status status = IHD_OK;
  if (synth->parsed()) {
    status = ihd_synth(p, n_scans);
  } else if (app.got_subcommand("train-cnn")) {
    status = ihd_train_cnn(p);
  } else if (app.got_subcommand("extract")) {
    status = ihd_extract(p);
  } else if (app.got_subcommand("fit-selector")) {
    status = ihd_fit_selector(p);
  } else if (app.got_subcommand("train-lstm")) {
    double seconds = 0.0;
    status = ihd_train_lstm(p, &seconds);
    if (status == IHD_OK) std::printf("train-lstm: training loop took %.1f s\n", seconds);
  } else if (predict->parsed()) {
    status = ihd_predict(p, split.c_str());
  } else if (evaluate->parsed()) {
    status = ihd_evaluate(p, predictions.empty() ? nullptr : predictions.c_str(), nullptr);
  } else if (gradcam->parsed()) {
    std::vector<const char *> names;
    for (const auto &c : classes) names.push_back(c.c_str());
    status = ihd_gradcam(p, scan_id.c_str(), names.data(), names.size(), slices.data(),
                         slices.size(), nullptr);
  }
  return Report(status);
}
