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
#ifndef IHD_CORE_SCAN_MODEL_HPP_
#define IHD_CORE_SCAN_MODEL_HPP_

// Stage 3: stacked bidirectional LSTM over the slices of one scan, followed by
// a per-slice sigmoid classifier that also sees the CNN probabilities.

#include <array>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "feature_selection.hpp"
#include "loss_metrics.hpp"
#include "rng.hpp"
#include "scan_io.hpp"
#include "tensor.hpp"
#include "types.hpp"

namespace ihd {

struct LstmConfig {
  std::size_t layers = 3;
  std::size_t feature_width = 256;  // both directions together
  double dropout = 0.3;             // between stacked layers
  std::size_t input_dim = 120;
  bool include_cnn_probs = true;

  void Validate() const;
  std::size_t hidden() const { return feature_width / 2; }
  std::size_t classifier_width() const {
    return feature_width + (include_cnn_probs ? kNumClasses : 0);
  }
};

// Gate rows are ordered input, forget, candidate, output.
struct LstmCellParams {
  Tensor w_ih;  // [4H, in]
  Tensor w_hh;  // [4H, H]
  Tensor bias;  // [4H]
};

struct LstmState {
  Tensor h;  // [1, H]
  Tensor c;  // [1, H]
};

// One step of the standard cell, composed from tape primitives. x is [1, in].
LstmState LstmCellStep(Tape &tape, const LstmCellParams &params,
                       const Tensor &x, const LstmState &prev);

// Runs one direction over a whole sequence x [T, in] from zero state and
// returns h for every step [T, H] in input order. Equivalent to chaining
// LstmCellStep, with a single fused backward pass.
Tensor LstmSequence(Tape &tape, const LstmCellParams &params, const Tensor &x,
                    bool reverse);

class ScanModel {
 public:
  LstmConfig config;
  std::vector<std::array<LstmCellParams, 2>> layers;  // [layer][fwd, bwd]
  Tensor cls_w;  // [6, classifier_width]
  Tensor cls_b;  // [6]

  std::vector<std::pair<std::string, Tensor>> NamedParameters() const;
  std::vector<Tensor> Parameters() const;
  ScanModel Clone() const;

  std::vector<NamedArray> ToArrays() const;
  static ScanModel FromArrays(const std::vector<NamedArray> &arrays);
};

ScanModel BuildScanModel(const LstmConfig &config, Rng &rng);

struct ScanSequence {
  std::string scan_id;
  Matrix features;                         // T x k, selected
  std::vector<PredictionVector> cnn_probs;  // T
  std::vector<LabelVector> labels;          // T; may be empty at inference

  std::size_t length() const { return features.rows; }
};

enum class RunMode { kTrain, kEval };

// Per-slice F-dim features [T, F]. `rng` is only drawn from in train mode.
Tensor BiLstmForward(Tape &tape, const ScanModel &model, const Tensor &x,
                     RunMode mode, Rng &rng);

// Per-slice logits [T, 6].
Tensor ClassifierLogits(Tape &tape, const ScanModel &model,
                        const Tensor &lstm_features,
                        std::span<const PredictionVector> cnn_probs);

std::vector<PredictionVector> ClassifySlices(
    const ScanModel &model, const Tensor &lstm_features,
    std::span<const PredictionVector> cnn_probs);

std::vector<PredictionVector> PredictScan(const ScanModel &model,
                                          const ScanSequence &seq);

struct LstmSchedule {
  std::vector<double> epoch_lrs = {1e-4, 1e-4, 1e-4, 1e-4};
};

struct ScanTrainRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // weighted mean log loss over all val slices
};

struct ScanTrainResult {
  ScanModel model;
  std::vector<ScanTrainRecord> history;
  std::size_t best_epoch = 0;
};

struct ScanTrainOptions {
  LstmSchedule schedule;
  ClassWeights weights;
  std::function<void(const std::string &)> log;
};

ScanTrainResult TrainScanModel(std::span<const ScanSequence> train,
                               std::span<const ScanSequence> val,
                               const LstmConfig &config,
                               const ScanTrainOptions &options, Rng &rng);

// Weighted mean log loss over every slice of every sequence.
double EvaluateScanModel(const ScanModel &model,
                         std::span<const ScanSequence> set,
                         const ClassWeights &weights);

}  // namespace ihd

#endif  // IHD_CORE_SCAN_MODEL_HPP_
