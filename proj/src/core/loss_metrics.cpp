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
#include "loss_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "error.hpp"

namespace ihd {

void ClassWeights::Validate() const {
  double total = 0.0;
  for (double w : values) {
    IHD_CHECK(w >= 0.0 && std::isfinite(w), ValidationError,
              "class weights must be finite and non-negative");
    total += w;
  }
  IHD_CHECK(total > 0.0, ValidationError, "class weights are all zero");
}

double BinaryCrossEntropy(std::uint8_t label, double prediction) {
  const double p = std::clamp(prediction, kProbClamp, 1.0 - kProbClamp);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

double MultiBce(const LabelVector &labels, const PredictionVector &preds) {
  double s = 0.0;
  for (std::size_t t = 0; t < kNumClasses; ++t)
    s += BinaryCrossEntropy(labels[t], preds[t]);
  return s;
}

double WeightedMeanLogLoss(std::span<const PredictionVector> preds,
                           std::span<const LabelVector> labels,
                           const ClassWeights &weights) {
  IHD_CHECK(preds.size() == labels.size(), ValidationError,
            "weighted log loss: ", preds.size(), " predictions vs ",
            labels.size(), " labels");
  IHD_CHECK(!preds.empty(), ValidationError,
            "weighted log loss of an empty set");
  weights.Validate();
  const double wsum =
      std::accumulate(weights.values.begin(), weights.values.end(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t t = 0; t < kNumClasses; ++t)
      total += weights.values[t] * BinaryCrossEntropy(labels[i][t], preds[i][t]);
  return total / (static_cast<double>(preds.size()) * wsum);
}

ThresholdMetrics ComputeThresholdMetrics(std::span<const PredictionVector> preds,
                                         std::span<const LabelVector> labels,
                                         double threshold, std::size_t cls) {
  IHD_CHECK(preds.size() == labels.size() && !preds.empty(), ValidationError,
            "threshold metrics need equal, non-zero counts (", preds.size(),
            " vs ", labels.size(), ")");
  IHD_CHECK(cls < kNumClasses, ValidationError, "class index ", cls,
            " out of range");
  ThresholdMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool predicted = preds[i][cls] >= threshold;
    const bool actual = labels[i][cls] != 0;
    if (predicted && actual) ++m.tp;
    else if (predicted) ++m.fp;
    else if (actual) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(preds.size());
  if (m.tp + m.fn > 0)
    m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (m.tn + m.fp > 0)
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  return m;
}

double RocAuc(std::span<const double> scores,
              std::span<const std::uint8_t> labels) {
  IHD_CHECK(scores.size() == labels.size(), ValidationError, "roc_auc: ",
            scores.size(), " scores vs ", labels.size(), " labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j share the midrank.
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  IHD_CHECK(n_pos > 0 && n_neg > 0, ValidationError,
            "roc_auc undefined: need both positive and negative labels (",
            n_pos, " positive, ", n_neg, " negative)");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PredictionVector ScanAggregate(std::span<const PredictionVector> slices) {
  IHD_CHECK(!slices.empty(), ValidationError, "scan aggregate of zero slices");
  PredictionVector out = slices.front();
  for (const auto &s : slices)
    for (std::size_t t = 0; t < kNumClasses; ++t) out[t] = std::max(out[t], s[t]);
  return out;
}

Tensor MultiBceWithLogits(Tape &tape, const Tensor &logits,
                          std::span<const LabelVector> labels) {
  IHD_CHECK(logits.rank() == 2 && logits.dim(1) == kNumClasses &&
                logits.dim(0) == labels.size(),
            ShapeError, "multi_bce: logits ", ShapeToString(logits.shape()),
            " vs ", labels.size(), " label rows");
  const std::size_t n = labels.size();
  std::vector<double> dz(n * kNumClasses);
  double total = 0.0;
  auto z = logits.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      const double v = z[i * kNumClasses + t];
      const double p = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                : std::exp(v) / (1.0 + std::exp(v));
      total += BinaryCrossEntropy(labels[i][t], p);
      const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
      dz[i * kNumClasses + t] =
          clamped ? 0.0 : (p - static_cast<double>(labels[i][t])) / static_cast<double>(n);
    }
  Tensor y = MakeResult({1}, {total / static_cast<double>(n)}, {&logits});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({logits}, y, [logits, yn, dz = std::move(dz)]() {
      auto &g = AccumulateGrad(logits);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[0] * dz[i];
    });
  }
  return y;
}

}  // namespace ihd
