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
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "error.hpp"
#include "oracles.hpp"
#include "scan_model.hpp"

using namespace ihd;

namespace {

LstmConfig SmallConfig(std::size_t layers = 2) {
  LstmConfig c;
  c.layers = layers;
  c.feature_width = 8;
  c.input_dim = 5;
  c.dropout = 0.3;
  return c;
}

LstmCellParams ZeroCell(std::size_t in, std::size_t h) {
  return {Tensor::Zeros({4 * h, in}), Tensor::Zeros({4 * h, h}), Tensor::Zeros({4 * h})};
}

LstmState ZeroState(std::size_t h) { return {Tensor::Zeros({1, h}), Tensor::Zeros({1, h})}; }

ScanSequence RandomSequence(std::size_t t, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  ScanSequence s;
  s.scan_id = "s" + std::to_string(seed);
  s.features = Matrix(t, k);
  for (auto &v : s.features.values) v = rng.Uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < t; ++i) {
    PredictionVector p;
    for (auto &v : p) v = rng.Uniform(0.05, 0.95);
    s.cnn_probs.push_back(p);
    LabelVector l{};
    l[kAny] = l[kSubdural] = static_cast<std::uint8_t>(i % 2);
    s.labels.push_back(l);
  }
  return s;
}

Tensor EvalForward(const ScanModel &m, const Tensor &x) {
  Tape tape;
  Rng unused(0);
  return BiLstmForward(tape, m, x, RunMode::kEval, unused);
}

}  // namespace

TEST_CASE("cell with zero parameters outputs h = 0") {
  Tape tape;
  const auto st = LstmCellStep(tape, ZeroCell(3, 2), oracle::RandomTensor({1, 3}, 1, false),
                               {oracle::RandomTensor({1, 2}, 2, false), Tensor::Zeros({1, 2})});
  for (double v : st.h.data()) CHECK(v == 0.0);
}

TEST_CASE("forget bias alone leaves a zero cell at zero") {
  for (double b : {-3.0, 0.0, 1.0, 5.0}) {
    LstmCellParams p = ZeroCell(2, 3);
    for (std::size_t j = 3; j < 6; ++j) p.bias.mutable_data()[j] = b;
    Tape tape;
    const auto st = LstmCellStep(tape, p, Tensor::Zeros({1, 2}), ZeroState(3));
    for (double v : st.c.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("scalar cell matches hand evaluation") {
  // i = f = o = sigmoid(0) = 0.5 and g = tanh(1) from a candidate bias of 1.
  LstmCellParams p = ZeroCell(1, 1);
  p.bias.mutable_data()[2] = 1.0;
  Tape tape;
  const auto st = LstmCellStep(tape, p, Tensor::Zeros({1, 1}), ZeroState(1));
  const double c = 0.5 * std::tanh(1.0);
  CHECK(st.c.item() == doctest::Approx(c).epsilon(1e-15));
  CHECK(st.h.item() == doctest::Approx(0.5 * std::tanh(c)).epsilon(1e-15));
}

TEST_CASE("cell rejects shape mismatches") {
  Tape tape;
  CHECK_THROWS_AS(LstmCellStep(tape, ZeroCell(3, 2), Tensor::Zeros({1, 4}), ZeroState(2)),
                  ShapeError);
  CHECK_THROWS_AS(LstmCellStep(tape, ZeroCell(3, 2), Tensor::Zeros({1, 3}), ZeroState(3)),
                  ShapeError);
}

TEST_CASE("fused sequence equals chained cell steps") {
  Rng rng(3);
  const ScanModel m = BuildScanModel(SmallConfig(1), rng);
  const LstmCellParams &cell = m.layers[0][0];
  const Tensor x = oracle::RandomTensor({4, 5}, 4, false);
  for (bool reverse : {false, true}) {
    Tape tape;
    const Tensor fused = LstmSequence(tape, cell, x, reverse);
    LstmState st = ZeroState(4);
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t t = reverse ? 3 - s : s;
      st = LstmCellStep(tape, cell, Slice(tape, x, 0, t, t + 1), st);
      for (std::size_t j = 0; j < 4; ++j) CHECK(fused.at(t * 4 + j) == st.h.at(j));
    }
  }
}

TEST_CASE("output length equals input length, including T = 1") {
  Rng rng(5);
  const ScanModel m = BuildScanModel(SmallConfig(), rng);
  for (std::size_t t : {1, 2, 7}) {
    const Tensor out = EvalForward(m, oracle::RandomTensor({t, 5}, t, false));
    CHECK(out.shape() == Shape({t, 8}));
    for (double v : out.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("eval mode is deterministic and ignores the rng") {
  Rng rng(6);
  const ScanModel m = BuildScanModel(SmallConfig(3), rng);
  const Tensor x = oracle::RandomTensor({5, 5}, 7, false);
  Tape tape;
  Rng r1(1), r2(999);
  const Tensor a = BiLstmForward(tape, m, x, RunMode::kEval, r1);
  const Tensor b = BiLstmForward(tape, m, x, RunMode::kEval, r2);
  CHECK(std::ranges::equal(a.data(), b.data()));
  CHECK(r1.Next() == Rng(1).Next());
}

namespace {

// Reversing the input and swapping the forward and backward cells reverses the
// output sequence and swaps its halves. Above the first layer the input is
// itself [fwd, bwd], so the input columns of w_ih are swapped as well; that
// permutes the dot-product summation order, hence the tolerance.
void CheckDirectionSymmetry(std::size_t layers, double tol) {
  Rng rng(8);
  const ScanModel m = BuildScanModel(SmallConfig(layers), rng);
  ScanModel swapped = m.Clone();
  const std::size_t t = 6, k = 5, f = 8, h = 4;
  for (std::size_t l = 0; l < layers; ++l) {
    auto &layer = swapped.layers[l];
    std::swap(layer[0], layer[1]);
    if (l == 0) continue;
    for (auto &cell : layer) {
      std::vector<double> w(cell.w_ih.data().begin(), cell.w_ih.data().end());
      for (std::size_t r = 0; r < 4 * h; ++r)
        for (std::size_t c = 0; c < f; ++c) w[r * f + c] = cell.w_ih.at(r * f + (c + h) % f);
      cell.w_ih = Tensor::FromData({4 * h, f}, w);
    }
  }
  const Tensor x = oracle::RandomTensor({t, k}, 9, false);
  std::vector<double> rev(t * k);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < k; ++j) rev[i * k + j] = x.at((t - 1 - i) * k + j);
  const Tensor a = EvalForward(m, x);
  const Tensor b = EvalForward(swapped, Tensor::FromData({t, k}, rev));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double want = a.at((t - 1 - i) * f + (j + h) % f);
      CHECK(std::abs(b.at(i * f + j) - want) <= tol * std::abs(want));
    }
}

}  // namespace

TEST_CASE("direction symmetry, one layer") { CheckDirectionSymmetry(1, 0.0); }

TEST_CASE("direction symmetry, three layers") { CheckDirectionSymmetry(3, 1e-12); }

TEST_CASE("zero classifier weights give one half everywhere") {
  Rng rng(10);
  ScanModel m = BuildScanModel(SmallConfig(), rng);
  for (auto &v : m.cls_w.mutable_data()) v = 0.0;
  const ScanSequence seq = RandomSequence(4, 5, 11);
  for (const auto &p : PredictScan(m, seq))
    for (double v : p) CHECK(v == 0.5);
}

TEST_CASE("include_cnn_probs changes the classifier width by six") {
  LstmConfig with = SmallConfig();
  LstmConfig without = SmallConfig();
  without.include_cnn_probs = false;
  Rng a(1), b(1);
  CHECK(BuildScanModel(with, a).cls_w.shape() == Shape({6, 14}));
  CHECK(BuildScanModel(without, b).cls_w.shape() == Shape({6, 8}));
}

TEST_CASE("classifier on the probability block alone is sigmoid(s * p)") {
  Rng rng(12);
  ScanModel m = BuildScanModel(SmallConfig(), rng);
  const double s = 2.5;
  auto w = m.cls_w.mutable_data();
  std::ranges::fill(w, 0.0);
  for (std::size_t c = 0; c < kNumClasses; ++c) w[c * 14 + 8 + c] = s;
  const ScanSequence seq = RandomSequence(3, 5, 13);
  const auto out = PredictScan(m, seq);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      CHECK(out[i][c] ==
            doctest::Approx(1.0 / (1.0 + std::exp(-s * seq.cnn_probs[i][c]))).epsilon(1e-14));
}

TEST_CASE("classifier rejects mismatched lengths") {
  Rng rng(14);
  const ScanModel m = BuildScanModel(SmallConfig(), rng);
  const Tensor feats = Tensor::Zeros({3, 8});
  const std::vector<PredictionVector> probs(2);
  CHECK_THROWS(ClassifySlices(m, feats, probs));
}

TEST_CASE("loss on one 3-slice scan decreases over the first 20 steps") {
  LstmConfig cfg = SmallConfig(1);
  Rng rng(15);
  ScanModel m = BuildScanModel(cfg, rng);
  const ScanSequence seq = RandomSequence(3, 5, 16);
  const Tensor x = Tensor::FromData({3, 5}, seq.features.values);
  Adam adam(m.Parameters());
  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) {
    Tape tape;
    Rng drop(static_cast<std::uint64_t>(step));
    const Tensor feats = BiLstmForward(tape, m, x, RunMode::kTrain, drop);
    Tensor loss =
        MultiBceWithLogits(tape, ClassifierLogits(tape, m, feats, seq.cnn_probs), seq.labels);
    losses.push_back(loss.item());
    adam.Step(Backward(tape, loss, m.Parameters()), 1e-2);
  }
  for (int step = 1; step <= 20; ++step) CHECK(losses[step] < losses[step - 1]);
}

TEST_CASE("zero epochs return the initialization; empty input is rejected") {
  const LstmConfig cfg = SmallConfig();
  const std::vector<ScanSequence> train = {RandomSequence(3, 5, 17)};
  ScanTrainOptions opts;
  opts.schedule.epoch_lrs = {};
  Rng a(2), b(2);
  const auto result = TrainScanModel(train, {}, cfg, opts, a);
  CHECK(result.best_epoch == 0);
  const ScanModel init = BuildScanModel(cfg, b);
  const auto pa = result.model.Parameters();
  const auto pb = init.Parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::ranges::equal(pa[i].data(), pb[i].data()));
  CHECK_THROWS_AS(TrainScanModel({}, {}, cfg, opts, a), ValidationError);
}

TEST_CASE("training selects the lowest validation loss epoch") {
  const LstmConfig cfg = SmallConfig();
  std::vector<ScanSequence> train, val;
  for (std::uint64_t i = 0; i < 4; ++i) train.push_back(RandomSequence(3 + i, 5, 20 + i));
  val.push_back(RandomSequence(4, 5, 30));
  ScanTrainOptions opts;
  opts.schedule.epoch_lrs = {1e-2, 1e-2, 1e-2};
  Rng rng(3);
  const auto result = TrainScanModel(train, val, cfg, opts, rng);
  REQUIRE(result.history.size() == 3);
  const auto best = std::ranges::min_element(result.history, {}, &ScanTrainRecord::val_loss);
  CHECK(result.best_epoch == best->epoch);
  CHECK(EvaluateScanModel(result.model, val, opts.weights) ==
        doctest::Approx(best->val_loss).epsilon(1e-12));
}

TEST_CASE("scan model arrays round-trip") {
  Rng rng(18);
  const ScanModel m = BuildScanModel(SmallConfig(), rng);
  const ScanModel back = ScanModel::FromArrays(DecodeCheckpoint(EncodeCheckpoint(m.ToArrays())));
  CHECK(back.config.layers == 2);
  CHECK(back.config.feature_width == 8);
  CHECK(back.config.include_cnn_probs);
  const auto pa = m.NamedParameters();
  const auto pb = back.NamedParameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].second.size(); ++j)
      CHECK(pb[i].second.at(j) == static_cast<double>(static_cast<float>(pa[i].second.at(j))));
}

TEST_CASE("invalid lstm configs are rejected") {
  Rng rng(1);
  LstmConfig c = SmallConfig();
  c.feature_width = 7;
  CHECK_THROWS_AS(BuildScanModel(c, rng), ValidationError);
  c = SmallConfig();
  c.dropout = 1.0;
  CHECK_THROWS_AS(BuildScanModel(c, rng), ValidationError);
  c = SmallConfig();
  c.layers = 0;
  CHECK_THROWS_AS(BuildScanModel(c, rng), ValidationError);
}
