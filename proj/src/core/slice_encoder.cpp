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
#include "slice_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace ihd {

void EncoderConfig::Validate() const {
  IHD_CHECK(!stage_widths.empty(), ValidationError,
            "encoder needs at least one stage");
  IHD_CHECK(blocks_per_stage >= 1, ValidationError,
            "encoder blocks_per_stage must be >= 1");
  IHD_CHECK(cardinality >= 1 && group_width >= 1, ValidationError,
            "encoder cardinality and group_width must be >= 1");
  IHD_CHECK(cardinality * group_width <= stage_widths.front(), ValidationError,
            "cardinality * group_width (", cardinality * group_width,
            ") exceeds first stage width ", stage_widths.front());
  for (std::size_t s = 0; s < stage_widths.size(); ++s)
    IHD_CHECK(BottleneckWidth(s) % cardinality == 0, ValidationError,
              "stage ", s, " bottleneck width ", BottleneckWidth(s),
              " not divisible by cardinality ", cardinality);
  IHD_CHECK(embedding_dim >= 8, ValidationError, "embedding_dim must be >= 8");
  IHD_CHECK(embedding_dim == stage_widths.back(), ValidationError,
            "embedding_dim (", embedding_dim,
            ") must equal the last stage width (", stage_widths.back(), ")");
  IHD_CHECK(input_side >= 8, ValidationError, "input_side must be >= 8");
  const std::size_t reduction = std::size_t{1} << stage_widths.size();
  IHD_CHECK(input_side >= reduction, ValidationError, "input_side ",
            input_side, " too small for ", stage_widths.size(), " stages");
}

std::size_t EncoderConfig::BottleneckWidth(std::size_t s) const {
  return std::min(cardinality * group_width * (std::size_t{1} << s),
                  stage_widths[s]);
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::NamedParameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("stem.w", stem_w);
  out.emplace_back("stem.b", stem_b);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto &b = blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.emplace_back(p + "reduce.w", b.reduce_w);
    out.emplace_back(p + "reduce.b", b.reduce_b);
    out.emplace_back(p + "group.w", b.group_w);
    out.emplace_back(p + "group.b", b.group_b);
    out.emplace_back(p + "expand.w", b.expand_w);
    out.emplace_back(p + "expand.b", b.expand_b);
    if (b.proj_w.defined()) {
      out.emplace_back(p + "proj.w", b.proj_w);
      out.emplace_back(p + "proj.b", b.proj_b);
    }
  }
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

std::vector<Tensor> EncoderModel::Parameters() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : NamedParameters()) out.push_back(t);
  return out;
}

std::size_t EncoderModel::ParameterCount() const {
  std::size_t n = 0;
  for (const auto &t : Parameters()) n += t.size();
  return n;
}

EncoderModel EncoderModel::Clone() const {
  auto copy = [](const Tensor &t) {
    return t.defined() ? t.Detach(t.requires_grad()) : Tensor();
  };
  EncoderModel m;
  m.config = config;
  m.stem_w = copy(stem_w);
  m.stem_b = copy(stem_b);
  for (const auto &b : blocks)
    m.blocks.push_back({copy(b.reduce_w), copy(b.reduce_b), copy(b.group_w),
                        copy(b.group_b), copy(b.expand_w), copy(b.expand_b),
                        copy(b.proj_w), copy(b.proj_b), b.stride});
  m.head_w = copy(head_w);
  m.head_b = copy(head_b);
  return m;
}

std::vector<NamedArray> EncoderModel::ToArrays() const {
  std::vector<double> cfg = {static_cast<double>(config.stage_widths.size())};
  for (std::size_t w : config.stage_widths) cfg.push_back(static_cast<double>(w));
  for (std::size_t v : {config.blocks_per_stage, config.cardinality,
                        config.group_width, config.embedding_dim,
                        config.input_side})
    cfg.push_back(static_cast<double>(v));
  std::vector<NamedArray> out = {ScalarArray("encoder/config", cfg)};
  for (const auto &[name, t] : NamedParameters())
    out.push_back(ToNamedArray("encoder/" + name, t));
  return out;
}

EncoderModel EncoderModel::FromArrays(const std::vector<NamedArray> &arrays) {
  const auto &a = FindArray(arrays, "encoder/config");
  for (float v : a.values)
    IHD_CHECK(std::isfinite(v) && v >= 0.0f && v == std::floor(v), FormatError,
              "encoder/config holds a non-integer value");
  IHD_CHECK(!a.values.empty() && a.values[0] >= 1.0f &&
                a.values.size() == static_cast<std::size_t>(a.values[0]) + 6,
            FormatError, "encoder/config has ", a.values.size(),
            " values, inconsistent with its stage count");
  EncoderConfig c;
  const auto stages = static_cast<std::size_t>(a.values[0]);
  c.stage_widths.clear();
  for (std::size_t s = 0; s < stages; ++s)
    c.stage_widths.push_back(static_cast<std::size_t>(a.values[1 + s]));
  c.blocks_per_stage = static_cast<std::size_t>(a.values[1 + stages]);
  c.cardinality = static_cast<std::size_t>(a.values[2 + stages]);
  c.group_width = static_cast<std::size_t>(a.values[3 + stages]);
  c.embedding_dim = static_cast<std::size_t>(a.values[4 + stages]);
  c.input_side = static_cast<std::size_t>(a.values[5 + stages]);
  try {
    c.Validate();
  } catch (const ValidationError &e) {
    throw FormatError(std::string("stored encoder config is invalid: ") + e.what());
  }
  Rng unused(0);
  EncoderModel m = BuildEncoder(c, unused);
  for (auto &[name, t] : m.NamedParameters()) {
    Tensor loaded = ToTensor(FindArray(arrays, "encoder/" + name));
    IHD_CHECK(loaded.shape() == t.shape(), FormatError, "array encoder/", name,
              " has shape ", ShapeToString(loaded.shape()), ", expected ",
              ShapeToString(t.shape()));
    auto dst = t.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
  }
  return m;
}

namespace {

Tensor HeUniform(Shape shape, Rng &rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (auto &x : v) x = rng.Uniform(-bound, bound);
  return Tensor::FromData(std::move(shape), std::move(v), true);
}

Tensor ZeroBias(std::size_t n) { return Tensor::Zeros({n}, true); }

}  // namespace

EncoderModel BuildEncoder(const EncoderConfig &config, Rng &rng) {
  config.Validate();
  EncoderModel m;
  m.config = config;
  const std::size_t c0 = config.stage_widths.front();
  m.stem_w = HeUniform({c0, 3, 3, 3}, rng);
  m.stem_b = ZeroBias(c0);
  std::size_t in = c0;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const std::size_t out = config.stage_widths[s];
    const std::size_t mid = config.BottleneckWidth(s);
    for (std::size_t k = 0; k < config.blocks_per_stage; ++k) {
      ResidualBlock b;
      b.stride = (s > 0 && k == 0) ? 2 : 1;
      b.reduce_w = HeUniform({mid, in, 1, 1}, rng);
      b.reduce_b = ZeroBias(mid);
      b.group_w = HeUniform({mid, mid / config.cardinality, 3, 3}, rng);
      b.group_b = ZeroBias(mid);
      b.expand_w = HeUniform({out, mid, 1, 1}, rng);
      b.expand_b = ZeroBias(out);
      if (in != out || b.stride != 1) {
        b.proj_w = HeUniform({out, in, 1, 1}, rng);
        b.proj_b = ZeroBias(out);
      }
      m.blocks.push_back(std::move(b));
      in = out;
    }
  }
  const std::size_t d = config.embedding_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> hw(kNumClasses * d);
  for (auto &x : hw) x = rng.Uniform(-bound, bound);
  m.head_w = Tensor::FromData({kNumClasses, d}, std::move(hw), true);
  m.head_b = ZeroBias(kNumClasses);
  return m;
}

Tensor ForwardBlock(Tape &tape, const ResidualBlock &block, const Tensor &x,
                    std::size_t cardinality) {
  Tensor r = Relu(tape, Conv2d(tape, x, block.reduce_w, block.reduce_b, {}));
  Tensor g = Relu(tape, Conv2d(tape, r, block.group_w, block.group_b,
                               {block.stride, 1, cardinality}));
  Tensor e = Conv2d(tape, g, block.expand_w, block.expand_b, {});
  Tensor shortcut =
      block.proj_w.defined()
          ? Conv2d(tape, x, block.proj_w, block.proj_b, {block.stride, 0, 1})
          : x;
  return Relu(tape, Add(tape, e, shortcut));
}

Tensor ForwardTrunk(Tape &tape, const EncoderModel &model,
                    const Tensor &images) {
  const auto &cfg = model.config;
  IHD_CHECK(images.rank() == 4 && images.dim(1) == 3 &&
                images.dim(2) == cfg.input_side &&
                images.dim(3) == cfg.input_side,
            ValidationError, "encoder expects [n, 3, ", cfg.input_side, ", ",
            cfg.input_side, "] input, got ", ShapeToString(images.shape()));
  Tensor x = Relu(tape, Conv2d(tape, images, model.stem_w, model.stem_b,
                               {2, 1, 1}));
  for (const auto &b : model.blocks) x = ForwardBlock(tape, b, x, cfg.cardinality);
  return x;
}

Tensor ForwardHead(Tape &tape, const EncoderModel &model,
                   const Tensor &features, Tensor *embedding) {
  Tensor emb = GlobalAvgPool(tape, features);
  if (embedding) *embedding = emb;
  return Linear(tape, emb, model.head_w, model.head_b);
}

EncoderActivations ForwardEncoder(Tape &tape, const EncoderModel &model,
                                  const Tensor &images) {
  EncoderActivations a;
  a.features = ForwardTrunk(tape, model, images);
  a.logits = ForwardHead(tape, model, a.features, &a.embedding);
  return a;
}

Tensor StackImages(std::span<const Image> images) {
  IHD_CHECK(!images.empty(), ValidationError, "no images to stack");
  const Image &first = images.front();
  std::vector<double> data;
  data.reserve(images.size() * first.values.size());
  for (const auto &img : images) {
    IHD_CHECK(img.channels == first.channels && img.height == first.height &&
                  img.width == first.width,
              ValidationError, "images in a batch must share dimensions");
    data.insert(data.end(), img.values.begin(), img.values.end());
  }
  return Tensor::FromData({images.size(), first.channels, first.height,
                           first.width},
                          std::move(data));
}

namespace {

double StableSigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::vector<SliceOutput> EncodeBatch(const EncoderModel &model,
                                     std::span<const Image> images,
                                     std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<SliceOutput> out;
  out.reserve(images.size());
  const std::size_t d = model.config.embedding_dim;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, images.size() - start);
    Tape tape;
    auto act = ForwardEncoder(tape, model, StackImages(images.subspan(start, n)));
    for (std::size_t i = 0; i < n; ++i) {
      SliceOutput o;
      o.embedding.assign(act.embedding.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                         act.embedding.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      for (std::size_t t = 0; t < kNumClasses; ++t)
        o.probs[t] = StableSigmoid(act.logits.at(i * kNumClasses + t));
      out.push_back(std::move(o));
    }
  }
  return out;
}

SliceOutput Encode(const EncoderModel &model, const Image &image) {
  return EncodeBatch(model, std::span<const Image>(&image, 1), 1).front();
}

Tensor HeadWeights(const EncoderModel &model) { return model.head_w.Detach(); }

std::vector<PredictionVector> PredictSlices(const EncoderModel &model,
                                            std::span<const LabeledSlice> set,
                                            const NormalizationStats &norm) {
  std::vector<PredictionVector> out;
  out.reserve(set.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, set.size() - start);
    std::vector<Image> images;
    images.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      images.push_back(PrepareModelInput(set[start + i].slice,
                                         model.config.input_side, norm));
    for (auto &o : EncodeBatch(model, images)) out.push_back(o.probs);
  }
  return out;
}

EncoderTrainResult TrainSliceModel(std::span<const LabeledSlice> train,
                                   std::span<const LabeledSlice> val,
                                   const EncoderConfig &config,
                                   const EncoderTrainOptions &options,
                                   Rng &rng) {
  IHD_CHECK(!train.empty(), ValidationError, "empty CNN training set");
  IHD_CHECK(options.schedule.batch_size >= 1, ValidationError,
            "batch_size must be >= 1");
  for (double lr : options.schedule.epoch_lrs)
    IHD_CHECK(lr > 0.0, ValidationError, "learning rates must be > 0");
  if (options.augment) options.augmentation.Validate();

  auto log = [&](const std::string &line) {
    if (options.log) options.log(line);
  };

  EncoderTrainResult result;
  result.model = BuildEncoder(config, rng);
  EncoderModel best = result.model.Clone();
  double best_val = std::numeric_limits<double>::infinity();

  auto val_labels = [&] {
    std::vector<LabelVector> v;
    for (const auto &s : val) v.push_back(s.labels);
    return v;
  }();

  const auto params = result.model.Parameters();
  Adam adam(params);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = options.schedule.batch_size;
  const std::size_t side = config.input_side;

  for (std::size_t e = 0; e < options.schedule.epoch_lrs.size(); ++e) {
    const double lr = options.schedule.epoch_lrs[e];
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<Image> images;
      std::vector<LabelVector> labels;
      for (std::size_t i = 0; i < n; ++i) {
        const auto &ex = train[order[start + i]];
        images.push_back(PrepareModelInput(
            ex.slice, side, options.normalization,
            options.augment ? &options.augmentation : nullptr,
            options.augment ? &rng : nullptr));
        labels.push_back(ex.labels);
      }
      Tape tape;
      auto act = ForwardEncoder(tape, result.model, StackImages(images));
      Tensor loss = MultiBceWithLogits(tape, act.logits, labels);
      const double lv = loss.item();
      IHD_CHECK(std::isfinite(lv), RuntimeError,
                "non-finite CNN training loss at epoch ", e + 1, " step ",
                steps + 1);
      adam.Step(Backward(tape, loss, params), lr);
      loss_sum += lv;
      ++steps;
    }
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      auto preds = PredictSlices(result.model, val, options.normalization);
      rec.val_loss = WeightedMeanLogLoss(preds, val_labels, options.weights);
    }
    std::ostringstream os;
    os << "cnn epoch " << rec.epoch << " lr=" << rec.lr
       << " train_loss=" << rec.train_loss << " val_weighted_log_loss="
       << rec.val_loss;
    log(os.str());
    result.history.push_back(rec);
    // Without a validation set the last epoch wins.
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
