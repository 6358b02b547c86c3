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
#ifndef IHD_CORE_LOSS_METRICS_HPP_
#define IHD_CORE_LOSS_METRICS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "tensor.hpp"
#include "types.hpp"

namespace ihd {

// Predictions are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

struct ClassWeights {
  std::array<double, kNumClasses> values = {2.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  void Validate() const;
};

// Binary cross-entropy of one class, natural log, clamped prediction.
double BinaryCrossEntropy(std::uint8_t label, double prediction);

// Sum of the six per-class binary cross-entropies.
double MultiBce(const LabelVector &labels, const PredictionVector &preds);

// Sum over samples and classes of w_t * BCE, divided by N * sum(w).
double WeightedMeanLogLoss(std::span<const PredictionVector> preds,
                           std::span<const LabelVector> labels,
                           const ClassWeights &weights);

struct ThresholdMetrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity;  // absent without positive labels
  std::optional<double> specificity;  // absent without negative labels
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Predicted positive iff preds[i][cls] >= threshold.
ThresholdMetrics ComputeThresholdMetrics(std::span<const PredictionVector> preds,
                                         std::span<const LabelVector> labels,
                                         double threshold, std::size_t cls);

// Mann-Whitney AUC with midranks for ties. Throws when only one label value
// is present.
double RocAuc(std::span<const double> scores,
              std::span<const std::uint8_t> labels);

// Per-class maximum over the slices of one scan.
PredictionVector ScanAggregate(std::span<const PredictionVector> slices);

// Training loss on the tape: mean over rows of MultiBce(labels, sigmoid(z))
// for logits z of shape [n, 6].
Tensor MultiBceWithLogits(Tape &tape, const Tensor &logits,
                          std::span<const LabelVector> labels);

}  // namespace ihd

#endif  // IHD_CORE_LOSS_METRICS_HPP_
