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
#ifndef IHD_CORE_PIPELINE_HPP_
#define IHD_CORE_PIPELINE_HPP_

// The staged pipeline behind the CLI. Every stage reads and writes files in
// the work directory:
//
//   train-cnn     encoder.ckpt, train_cnn.log
//   extract       features.ckpt (per-scan embeddings, CNN probs, labels)
//   fit-selector  selector.ckpt
//   train-lstm    lstm.ckpt, train_lstm.log
//   predict       predictions.csv (CNN + LSTM), predictions_cnn.csv
//   evaluate      report.txt, report.kv
//   gradcam       gradcam/<scan>_<slice>_<class>.png

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "feature_selection.hpp"
#include "loss_metrics.hpp"
#include "preprocessing.hpp"
#include "scan_io.hpp"
#include "scan_model.hpp"
#include "slice_encoder.hpp"
#include "synthetic_data.hpp"

namespace ihd {

struct StageSeeds {
  std::uint64_t synth = 1;
  std::uint64_t cnn = 2;
  std::uint64_t lstm = 3;
};

struct PipelineConfig {
  std::filesystem::path data_root = "data";
  std::filesystem::path work_dir = "work";
  std::size_t synth_scans = 200;
  PhantomConfig phantom;
  SplitFractions split;
  EncoderConfig encoder;
  CnnSchedule cnn;
  bool augment = true;
  AugmentationConfig augmentation;
  NormalizationStats normalization;
  SelectorSpec selector;
  LstmConfig lstm;  // input_dim is taken from the fitted selector
  LstmSchedule lstm_schedule;
  ClassWeights weights;
  double threshold = 0.5;
  StageSeeds seeds;

  void Validate() const;
};

// Strict JSON parsing: unknown keys and wrong types are ValidationErrors.
// Relative paths resolve against `base_dir`.
PipelineConfig ParseConfig(const std::string &json_text,
                           const std::filesystem::path &base_dir);
PipelineConfig LoadConfig(const std::filesystem::path &path);
std::string DumpConfig(const PipelineConfig &config);

// --seed N replaces every stage seed with one derived from N.
void OverrideSeeds(PipelineConfig &config, std::uint64_t seed);

using LogFn = std::function<void(const std::string &)>;

inline const char *const kSplitNames[] = {"train", "val", "test"};

// A scan found on disk: volume plus validated labels.
struct LoadedScan {
  std::string scan_id;
  std::string split;
  HuVolume volume;
  std::vector<LabelVector> labels;
};

std::vector<std::string> ListSplit(const std::filesystem::path &root,
                                   const std::string &split);
LoadedScan LoadScan(const std::filesystem::path &root, const std::string &split,
                    const std::string &scan_id);

struct FeatureSet {
  std::size_t dim = 0;
  // Grouped by split; each entry is one scan.
  std::vector<ScanSequence> train, val, test;
};

std::vector<NamedArray> FeatureSetToArrays(const FeatureSet &set);
FeatureSet FeatureSetFromArrays(const std::vector<NamedArray> &arrays);

// ---- commands ------------------------------------------------------------

DatasetSummary RunSynth(const PipelineConfig &config, std::size_t n_scans,
                        const LogFn &log);
EncoderTrainResult RunTrainCnn(const PipelineConfig &config, const LogFn &log);
FeatureSet RunExtract(const PipelineConfig &config, const LogFn &log);
FittedSelector RunFitSelector(const PipelineConfig &config, const LogFn &log);

struct LstmRunInfo {
  ScanTrainResult result;
  double train_seconds = 0.0;  // TrainScanModel only
};
LstmRunInfo RunTrainLstm(const PipelineConfig &config, const LogFn &log);

struct PredictOutput {
  PredictionTable joint;
  PredictionTable cnn_only;
};
PredictOutput RunPredict(const PipelineConfig &config, const std::string &split,
                         const LogFn &log);

struct ClassReport {
  std::optional<double> auc;
  ThresholdMetrics threshold;
  double log_loss = 0.0;
};

struct LevelReport {
  std::size_t samples = 0;
  std::array<ClassReport, kNumClasses> classes;
  double weighted_log_loss = 0.0;
};

struct EvalReport {
  LevelReport slice;
  LevelReport scan;
  ClassWeights weights;
  double threshold = 0.5;
};

EvalReport Evaluate(const PredictionTable &predictions,
                    const std::filesystem::path &data_root,
                    const ClassWeights &weights, double threshold);
std::string FormatReport(const EvalReport &report);
std::string FormatReportKv(const EvalReport &report);
// `predictions` defaults to <work>/predictions.csv.
EvalReport RunEvaluate(const PipelineConfig &config,
                       const std::optional<std::filesystem::path> &predictions,
                       const LogFn &log);

struct GradcamRequest {
  std::string scan_id;
  std::vector<std::string> classes;   // class names; empty = all six
  std::vector<std::size_t> slices;    // empty = every slice
};
// Returns the written file paths.
std::vector<std::filesystem::path> RunGradcam(const PipelineConfig &config,
                                              const GradcamRequest &request,
                                              const LogFn &log);

std::size_t ParseClassName(const std::string &name);

}  // namespace ihd

#endif  // IHD_CORE_PIPELINE_HPP_
