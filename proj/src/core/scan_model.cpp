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
#include "scan_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace ihd {

void LstmConfig::Validate() const {
  IHD_CHECK(layers >= 1, ValidationError, "lstm layers must be >= 1");
  IHD_CHECK(feature_width >= 2 && feature_width % 2 == 0, ValidationError,
            "lstm feature width must be even and >= 2, got ", feature_width);
  IHD_CHECK(dropout >= 0.0 && dropout < 1.0, ValidationError,
            "lstm dropout must be in [0, 1), got ", dropout);
  IHD_CHECK(input_dim >= 1, ValidationError, "lstm input dim must be >= 1");
}

namespace {

double StableSigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void CheckCell(const LstmCellParams &p, std::size_t in) {
  IHD_CHECK(p.w_ih.rank() == 2 && p.w_hh.rank() == 2 && p.bias.rank() == 1,
            ShapeError, "lstm: malformed cell parameters");
  const std::size_t h = p.w_hh.dim(1);
  IHD_CHECK(p.w_ih.dim(0) == 4 * h && p.w_hh.dim(0) == 4 * h &&
                p.bias.dim(0) == 4 * h && p.w_ih.dim(1) == in,
            ShapeError, "lstm: cell expects input width ", p.w_ih.dim(1),
            " and hidden ", h, ", got input width ", in);
}

}  // namespace

LstmState LstmCellStep(Tape &tape, const LstmCellParams &params,
                       const Tensor &x, const LstmState &prev) {
  IHD_CHECK(x.rank() == 2 && x.dim(0) == 1, ShapeError,
            "lstm_cell_step: x must be [1, in], got ", ShapeToString(x.shape()));
  CheckCell(params, x.dim(1));
  const std::size_t h = params.w_hh.dim(1);
  IHD_CHECK(prev.h.shape() == Shape({1, h}) && prev.c.shape() == Shape({1, h}),
            ShapeError, "lstm_cell_step: state must be [1, ", h, "]");
  Tensor gates = Add(tape, Linear(tape, x, params.w_ih, params.bias),
                     Linear(tape, prev.h, params.w_hh, Tensor()));
  Tensor i = Sigmoid(tape, Slice(tape, gates, 1, 0, h));
  Tensor f = Sigmoid(tape, Slice(tape, gates, 1, h, 2 * h));
  Tensor g = Tanh(tape, Slice(tape, gates, 1, 2 * h, 3 * h));
  Tensor o = Sigmoid(tape, Slice(tape, gates, 1, 3 * h, 4 * h));
  Tensor c = Add(tape, Mul(tape, f, prev.c), Mul(tape, i, g));
  return {Mul(tape, o, Tanh(tape, c)), c};
}

Tensor LstmSequence(Tape &tape, const LstmCellParams &params, const Tensor &x,
                    bool reverse) {
  IHD_CHECK(x.rank() == 2 && x.dim(0) >= 1, ShapeError,
            "lstm: sequence must be [T>=1, in], got ", ShapeToString(x.shape()));
  CheckCell(params, x.dim(1));
  const std::size_t steps = x.dim(0), h = params.w_hh.dim(1), g4 = 4 * h;
  Tensor gx = Linear(tape, x, params.w_ih, params.bias);

  // Per step activations, indexed by sequence position.
  std::vector<double> acts(steps * g4), cells(steps * h), tanh_c(steps * h);
  std::vector<double> out(steps * h);
  auto gxd = gx.data();
  auto whh = params.w_hh.data();
  std::vector<double> hprev(h, 0.0), cprev(h, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    double *a = &acts[t * g4];
    for (std::size_t r = 0; r < g4; ++r) {
      double rec = 0.0;
      const double *w = &whh[r * h];
      for (std::size_t k = 0; k < h; ++k) rec += hprev[k] * w[k];
      a[r] = gxd[t * g4 + r] + rec;
    }
    for (std::size_t k = 0; k < h; ++k) {
      a[k] = StableSigmoid(a[k]);
      a[h + k] = StableSigmoid(a[h + k]);
      a[2 * h + k] = std::tanh(a[2 * h + k]);
      a[3 * h + k] = StableSigmoid(a[3 * h + k]);
      const double c = a[h + k] * cprev[k] + a[k] * a[2 * h + k];
      cells[t * h + k] = c;
      tanh_c[t * h + k] = std::tanh(c);
      out[t * h + k] = a[3 * h + k] * tanh_c[t * h + k];
      cprev[k] = c;
      hprev[k] = out[t * h + k];
    }
  }

  Tensor w_hh = params.w_hh;
  Tensor y = MakeResult({steps, h}, std::move(out), {&gx, &w_hh});
  if (!y.requires_grad()) return y;
  auto *yn = y.node();
  tape.Record({gx, w_hh}, y,
              [gx, w_hh, yn, steps, h, g4, reverse, acts = std::move(acts),
               cells = std::move(cells), tanh_c = std::move(tanh_c)]() {
                auto &ggx = AccumulateGrad(gx);
                auto &gw = AccumulateGrad(w_hh);
                auto whh = w_hh.data();
                const auto &hout = yn->data;
                std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dg(g4);
                for (std::size_t s = steps; s-- > 0;) {
                  const std::size_t t = reverse ? steps - 1 - s : s;
                  // Previous step in processing order, or none.
                  const bool first = s == 0;
                  const std::size_t tp = reverse ? t + 1 : t - 1;
                  const double *a = &acts[t * g4];
                  for (std::size_t k = 0; k < h; ++k) {
                    const double dh = yn->grad[t * h + k] + dh_next[k];
                    const double i = a[k], f = a[h + k], g = a[2 * h + k],
                                 o = a[3 * h + k], tc = tanh_c[t * h + k];
                    const double dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                    const double cp = first ? 0.0 : cells[tp * h + k];
                    dg[k] = dc * g * i * (1.0 - i);
                    dg[h + k] = dc * cp * f * (1.0 - f);
                    dg[2 * h + k] = dc * i * (1.0 - g * g);
                    dg[3 * h + k] = dh * tc * o * (1.0 - o);
                    dc_next[k] = dc * f;
                  }
                  for (std::size_t r = 0; r < g4; ++r) ggx[t * g4 + r] += dg[r];
                  std::fill(dh_next.begin(), dh_next.end(), 0.0);
                  if (first) continue;
                  const double *hp = &hout[tp * h];
                  for (std::size_t r = 0; r < g4; ++r) {
                    const double d = dg[r];
                    if (d == 0.0) continue;
                    double *gwr = &gw[r * h];
                    const double *w = &whh[r * h];
                    for (std::size_t k = 0; k < h; ++k) {
                      gwr[k] += d * hp[k];
                      dh_next[k] += d * w[k];
                    }
                  }
                }
              });
  return y;
}

std::vector<std::pair<std::string, Tensor>> ScanModel::NamedParameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string p =
          "lstm/l" + std::to_string(l) + (d == 0 ? "/fwd/" : "/bwd/");
      out.emplace_back(p + "w_ih", layers[l][d].w_ih);
      out.emplace_back(p + "w_hh", layers[l][d].w_hh);
      out.emplace_back(p + "bias", layers[l][d].bias);
    }
  out.emplace_back("lstm/cls/w", cls_w);
  out.emplace_back("lstm/cls/b", cls_b);
  return out;
}

std::vector<Tensor> ScanModel::Parameters() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : NamedParameters()) out.push_back(t);
  return out;
}

ScanModel ScanModel::Clone() const {
  ScanModel m;
  m.config = config;
  auto copy = [](const Tensor &t) { return t.Detach(true); };
  for (const auto &layer : layers) {
    std::array<LstmCellParams, 2> c;
    for (std::size_t d = 0; d < 2; ++d)
      c[d] = {copy(layer[d].w_ih), copy(layer[d].w_hh), copy(layer[d].bias)};
    m.layers.push_back(std::move(c));
  }
  m.cls_w = copy(cls_w);
  m.cls_b = copy(cls_b);
  return m;
}

std::vector<NamedArray> ScanModel::ToArrays() const {
  std::vector<NamedArray> out;
  out.push_back(ScalarArray(
      "lstm/config",
      {static_cast<double>(config.layers),
       static_cast<double>(config.feature_width), config.dropout,
       static_cast<double>(config.input_dim),
       config.include_cnn_probs ? 1.0 : 0.0}));
  for (const auto &[name, t] : NamedParameters()) out.push_back(ToNamedArray(name, t));
  return out;
}

ScanModel ScanModel::FromArrays(const std::vector<NamedArray> &arrays) {
  const auto &cfg = FindArray(arrays, "lstm/config");
  IHD_CHECK(cfg.values.size() == 5, FormatError,
            "lstm/config must hold 5 values, got ", cfg.values.size());
  for (float v : cfg.values)
    IHD_CHECK(std::isfinite(v) && v >= 0.0f, FormatError,
              "lstm/config holds an invalid value");
  LstmConfig c;
  c.layers = static_cast<std::size_t>(cfg.values[0]);
  c.feature_width = static_cast<std::size_t>(cfg.values[1]);
  c.dropout = cfg.values[2];
  c.input_dim = static_cast<std::size_t>(cfg.values[3]);
  c.include_cnn_probs = cfg.values[4] != 0.0f;
  try {
    c.Validate();
  } catch (const ValidationError &e) {
    throw FormatError(std::string("stored lstm config is invalid: ") + e.what());
  }
  Rng unused(0);
  ScanModel m = BuildScanModel(c, unused);
  for (auto &[name, t] : m.NamedParameters()) {
    const auto &a = FindArray(arrays, name);
    Tensor loaded = ToTensor(a, true);
    IHD_CHECK(loaded.shape() == t.shape(), FormatError, "array ", name,
              " has shape ", ShapeToString(loaded.shape()), ", expected ",
              ShapeToString(t.shape()));
    auto dst = t.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
  }
  return m;
}

ScanModel BuildScanModel(const LstmConfig &config, Rng &rng) {
  config.Validate();
  ScanModel m;
  m.config = config;
  const std::size_t h = config.hidden();
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.feature_width));
  auto uniform = [&](Shape s) {
    std::vector<double> v(NumElements(s));
    for (auto &x : v) x = rng.Uniform(-bound, bound);
    return Tensor::FromData(std::move(s), std::move(v), true);
  };
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : config.feature_width;
    std::array<LstmCellParams, 2> dirs;
    for (auto &d : dirs) {
      d.w_ih = uniform({4 * h, in});
      d.w_hh = uniform({4 * h, h});
      std::vector<double> b(4 * h, 0.0);
      std::fill(b.begin() + h, b.begin() + 2 * h, 1.0);
      d.bias = Tensor::FromData({4 * h}, std::move(b), true);
    }
    m.layers.push_back(std::move(dirs));
  }
  const std::size_t cw = config.classifier_width();
  const double cb = 1.0 / std::sqrt(static_cast<double>(cw));
  std::vector<double> w(kNumClasses * cw);
  for (auto &x : w) x = rng.Uniform(-cb, cb);
  m.cls_w = Tensor::FromData({kNumClasses, cw}, std::move(w), true);
  m.cls_b = Tensor::Zeros({kNumClasses}, true);
  return m;
}

Tensor BiLstmForward(Tape &tape, const ScanModel &model, const Tensor &x,
                     RunMode mode, Rng &rng) {
  IHD_CHECK(x.rank() == 2 && x.dim(0) >= 1 && x.dim(1) == model.config.input_dim,
            ShapeError, "bilstm: expected [T>=1, ", model.config.input_dim,
            "], got ", ShapeToString(x.shape()));
  Tensor cur = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (l > 0)
      cur = Dropout(tape, cur, model.config.dropout, mode == RunMode::kTrain, rng);
    Tensor fwd = LstmSequence(tape, model.layers[l][0], cur, false);
    Tensor bwd = LstmSequence(tape, model.layers[l][1], cur, true);
    cur = Concat(tape, fwd, bwd, 1);
  }
  return cur;
}

Tensor ClassifierLogits(Tape &tape, const ScanModel &model,
                        const Tensor &lstm_features,
                        std::span<const PredictionVector> cnn_probs) {
  const std::size_t t = lstm_features.dim(0);
  IHD_CHECK(lstm_features.rank() == 2 &&
                lstm_features.dim(1) == model.config.feature_width,
            ShapeError, "classifier: expected [T, ", model.config.feature_width,
            "] features, got ", ShapeToString(lstm_features.shape()));
  Tensor in = lstm_features;
  if (model.config.include_cnn_probs) {
    IHD_CHECK(cnn_probs.size() == t, ShapeError, "classifier: ", t,
              " feature rows but ", cnn_probs.size(), " CNN probability rows");
    std::vector<double> p;
    p.reserve(t * kNumClasses);
    for (const auto &row : cnn_probs) p.insert(p.end(), row.begin(), row.end());
    in = Concat(tape, in, Tensor::FromData({t, kNumClasses}, std::move(p)), 1);
  }
  return Linear(tape, in, model.cls_w, model.cls_b);
}

namespace {

std::vector<PredictionVector> LogitsToProbs(const Tensor &logits) {
  NoGradGuard ng;
  Tape tape;
  Tensor p = Sigmoid(tape, logits);
  std::vector<PredictionVector> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      out[i][c] = p.at(i * kNumClasses + c);
  return out;
}

Tensor SequenceInput(const ScanSequence &seq) {
  IHD_CHECK(seq.features.rows >= 1, ValidationError, "scan ", seq.scan_id,
            " has no slices");
  return Tensor::FromData({seq.features.rows, seq.features.cols},
                          seq.features.values);
}

}  // namespace

std::vector<PredictionVector> ClassifySlices(
    const ScanModel &model, const Tensor &lstm_features,
    std::span<const PredictionVector> cnn_probs) {
  NoGradGuard ng;
  Tape tape;
  return LogitsToProbs(ClassifierLogits(tape, model, lstm_features, cnn_probs));
}

std::vector<PredictionVector> PredictScan(const ScanModel &model,
                                          const ScanSequence &seq) {
  NoGradGuard ng;
  Tape tape;
  Rng unused(0);
  Tensor feats = BiLstmForward(tape, model, SequenceInput(seq), RunMode::kEval, unused);
  return ClassifySlices(model, feats, seq.cnn_probs);
}

double EvaluateScanModel(const ScanModel &model,
                         std::span<const ScanSequence> set,
                         const ClassWeights &weights) {
  std::vector<PredictionVector> preds;
  std::vector<LabelVector> labels;
  for (const auto &seq : set) {
    IHD_CHECK(seq.labels.size() == seq.length(), ValidationError, "scan ",
              seq.scan_id, " needs one label row per slice");
    auto p = PredictScan(model, seq);
    preds.insert(preds.end(), p.begin(), p.end());
    labels.insert(labels.end(), seq.labels.begin(), seq.labels.end());
  }
  return WeightedMeanLogLoss(preds, labels, weights);
}

ScanTrainResult TrainScanModel(std::span<const ScanSequence> train,
                               std::span<const ScanSequence> val,
                               const LstmConfig &config,
                               const ScanTrainOptions &options, Rng &rng) {
  IHD_CHECK(!train.empty(), ValidationError, "no training sequences");
  for (const auto &seq : train) {
    IHD_CHECK(seq.features.cols == config.input_dim, ValidationError, "scan ",
              seq.scan_id, " has ", seq.features.cols,
              "-dim features, lstm expects ", config.input_dim);
    IHD_CHECK(seq.labels.size() == seq.length() &&
                  seq.cnn_probs.size() == seq.length(),
              ValidationError, "scan ", seq.scan_id,
              " needs labels and CNN probabilities for every slice");
  }
  for (double lr : options.schedule.epoch_lrs)
    IHD_CHECK(lr > 0.0, ValidationError, "learning rates must be positive");
  auto log = [&](const std::string &s) {
    if (options.log) options.log(s);
  };

  ScanTrainResult result;
  result.model = BuildScanModel(config, rng);
  ScanModel best = result.model.Clone();
  double best_val = std::numeric_limits<double>::infinity();
  const auto params = result.model.Parameters();
  Adam adam(params);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t e = 0; e < options.schedule.epoch_lrs.size(); ++e) {
    const double lr = options.schedule.epoch_lrs[e];
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const auto &seq = train[idx];
      Tape tape;
      Tensor feats =
          BiLstmForward(tape, result.model, SequenceInput(seq), RunMode::kTrain, rng);
      Tensor loss = MultiBceWithLogits(
          tape, ClassifierLogits(tape, result.model, feats, seq.cnn_probs),
          seq.labels);
      const double lv = loss.item();
      IHD_CHECK(std::isfinite(lv), RuntimeError,
                "non-finite LSTM training loss at epoch ", e + 1, " on scan ",
                seq.scan_id);
      adam.Step(Backward(tape, loss, params), lr);
      loss_sum += lv;
    }
    ScanTrainRecord rec;
    rec.epoch = e + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN()
                               : EvaluateScanModel(result.model, val, options.weights);
    std::ostringstream os;
    os << "lstm epoch " << rec.epoch << " lr=" << rec.lr
       << " train_loss=" << rec.train_loss
       << " val_weighted_log_loss=" << rec.val_loss;
    log(os.str());
    result.history.push_back(rec);
    if (val.empty() || rec.val_loss < best_val) {
      best_val = val.empty() ? best_val : rec.val_loss;
      best = result.model.Clone();
      result.best_epoch = rec.epoch;
    }
  }
  result.model = std::move(best);
  return result;
}

}  // namespace ihd
