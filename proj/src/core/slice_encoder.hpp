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
#ifndef IHD_CORE_SLICE_ENCODER_HPP_
#define IHD_CORE_SLICE_ENCODER_HPP_

// Grouped-bottleneck residual CNN (ResNeXt-style) mapping one 3-channel
// slice image to a D-dim embedding and six independent class probabilities.
//
// Topology:
//   stem   3x3 conv, stride 2, ReLU
//   stage  blocks of  1x1 reduce -> ReLU -> grouped 3x3 (cardinality groups,
//          stride 2 in the first block of every stage but the first) -> ReLU
//          -> 1x1 expand, plus identity or strided 1x1 projection shortcut,
//          then ReLU
//   head   global average pool -> embedding -> linear(6) -> sigmoid

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "loss_metrics.hpp"
#include "preprocessing.hpp"
#include "rng.hpp"
#include "scan_io.hpp"
#include "tensor.hpp"
#include "types.hpp"

namespace ihd {

struct EncoderConfig {
  std::vector<std::size_t> stage_widths = {16, 32, 64, 128};
  std::size_t blocks_per_stage = 1;
  std::size_t cardinality = 4;
  // Per-group width of the grouped conv in the first stage; doubles with each
  // later stage, capped at the stage width.
  std::size_t group_width = 4;
  // Must equal the last stage width: the embedding is the pooled activation.
  std::size_t embedding_dim = 128;
  std::size_t input_side = 64;

  void Validate() const;
  // Channel count of the grouped conv in stage `s`.
  std::size_t BottleneckWidth(std::size_t s) const;
};

struct ResidualBlock {
  Tensor reduce_w, reduce_b;  // [mid, in, 1, 1]
  Tensor group_w, group_b;    // [mid, mid / cardinality, 3, 3]
  Tensor expand_w, expand_b;  // [out, mid, 1, 1]
  Tensor proj_w, proj_b;      // [out, in, 1, 1]; undefined for identity
  std::size_t stride = 1;
};

class EncoderModel {
 public:
  EncoderConfig config;
  Tensor stem_w, stem_b;
  std::vector<ResidualBlock> blocks;
  Tensor head_w;  // [6, D]
  Tensor head_b;  // [6]

  // Stable, unique names in a fixed order.
  std::vector<std::pair<std::string, Tensor>> NamedParameters() const;
  std::vector<Tensor> Parameters() const;
  std::size_t ParameterCount() const;
  EncoderModel Clone() const;

  // Checkpoint form: "encoder/config" plus one array per parameter.
  std::vector<NamedArray> ToArrays() const;
  static EncoderModel FromArrays(const std::vector<NamedArray> &arrays);
};

// He-uniform conv kernels, uniform(+-1/sqrt(D)) head, zero biases.
EncoderModel BuildEncoder(const EncoderConfig &config, Rng &rng);

struct SliceOutput {
  std::vector<double> embedding;  // D values
  PredictionVector probs;
};

struct EncoderActivations {
  Tensor features;   // last stage output [n, D, h, w]
  Tensor embedding;  // [n, D]
  Tensor logits;     // [n, 6]
};

Tensor ForwardBlock(Tape &tape, const ResidualBlock &block, const Tensor &x,
                    std::size_t cardinality);
// Stem and stages only.
Tensor ForwardTrunk(Tape &tape, const EncoderModel &model, const Tensor &images);
Tensor ForwardHead(Tape &tape, const EncoderModel &model,
                   const Tensor &features, Tensor *embedding = nullptr);
// images: [n, 3, side, side]
EncoderActivations ForwardEncoder(Tape &tape, const EncoderModel &model,
                                  const Tensor &images);

// Stacks normalized images into one [n, 3, side, side] tensor.
Tensor StackImages(std::span<const Image> images);

SliceOutput Encode(const EncoderModel &model, const Image &image);
std::vector<SliceOutput> EncodeBatch(const EncoderModel &model,
                                     std::span<const Image> images,
                                     std::size_t batch_size = 16);

// Copy of the classifier weight matrix, 6 x D.
Tensor HeadWeights(const EncoderModel &model);

struct LabeledSlice {
  HuSlice slice;
  LabelVector labels{};
};

struct CnnSchedule {
  std::vector<double> epoch_lrs = {1e-4, 1e-4, 2e-5};
  std::size_t batch_size = 16;
};

struct EncoderTrainOptions {
  CnnSchedule schedule;
  bool augment = true;
  AugmentationConfig augmentation;
  NormalizationStats normalization;
  ClassWeights weights;
  // Receives one line per epoch (and progress lines); may be empty.
  std::function<void(const std::string &)> log;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // weighted mean log loss; NaN without a val set
};

struct EncoderTrainResult {
  EncoderModel model;  // best checkpoint by validation loss
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 = untrained initialization
};

EncoderTrainResult TrainSliceModel(std::span<const LabeledSlice> train,
                                   std::span<const LabeledSlice> val,
                                   const EncoderConfig &config,
                                   const EncoderTrainOptions &options,
                                   Rng &rng);

// Slice-level predictions for a labeled set (no augmentation).
std::vector<PredictionVector> PredictSlices(const EncoderModel &model,
                                            std::span<const LabeledSlice> set,
                                            const NormalizationStats &norm);

}  // namespace ihd

#endif  // IHD_CORE_SLICE_ENCODER_HPP_
