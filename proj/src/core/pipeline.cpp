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
#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "error.hpp"
#include "gradcam.hpp"
#include "json.hpp"

namespace ihd {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers (usually typos) can be reported.
class ObjectReader {
 public:
  ObjectReader(const json &j, std::string where)
      : j_(j), where_(std::move(where)) {
    IHD_CHECK(j.is_object(), ValidationError, "config: ", where_,
              " must be an object");
  }

  bool Has(const char *key) const { return j_.contains(key); }

  const json *Raw(const char *key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string Path(const char *key) const { return where_ + "." + key; }

  void Get(const char *key, double &out) {
    if (const json *v = Raw(key)) {
      IHD_CHECK(v->is_number(), ValidationError, "config: ", Path(key),
                " must be a number");
      out = v->get<double>();
      IHD_CHECK(std::isfinite(out), ValidationError, "config: ", Path(key),
                " must be finite");
    }
  }
  void Get(const char *key, std::uint64_t &out) {
    if (const json *v = Raw(key)) out = Unsigned(*v, Path(key));
  }
  void Get(const char *key, bool &out) {
    if (const json *v = Raw(key)) {
      IHD_CHECK(v->is_boolean(), ValidationError, "config: ", Path(key),
                " must be true or false");
      out = v->get<bool>();
    }
  }
  void Get(const char *key, std::string &out) {
    if (const json *v = Raw(key)) {
      IHD_CHECK(v->is_string(), ValidationError, "config: ", Path(key),
                " must be a string");
      out = v->get<std::string>();
    }
  }
  void Get(const char *key, std::vector<double> &out) {
    if (const json *v = Raw(key)) {
      IHD_CHECK(v->is_array(), ValidationError, "config: ", Path(key),
                " must be an array of numbers");
      out.clear();
      for (const auto &e : *v) {
        IHD_CHECK(e.is_number(), ValidationError, "config: ", Path(key),
                  " must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void Get(const char *key, std::vector<std::size_t> &out) {
    if (const json *v = Raw(key)) {
      IHD_CHECK(v->is_array(), ValidationError, "config: ", Path(key),
                " must be an array of non-negative integers");
      out.clear();
      for (const auto &e : *v) out.push_back(Unsigned(e, Path(key)));
    }
  }
  template <std::size_t N>
  void Get(const char *key, std::array<double, N> &out) {
    std::vector<double> v;
    if (!Has(key)) return;
    Get(key, v);
    IHD_CHECK(v.size() == N, ValidationError, "config: ", Path(key), " needs ",
              N, " values, got ", v.size());
    std::copy(v.begin(), v.end(), out.begin());
  }

  ObjectReader Sub(const char *key) {
    const json *v = Raw(key);
    return ObjectReader(v ? *v : Empty(), Path(key));
  }

  void Finish() const {
    for (const auto &[key, value] : j_.items())
      IHD_CHECK(seen_.count(key) > 0, ValidationError, "config: unknown key ",
                where_, ".", key);
  }

 private:
  static const json &Empty() {
    static const json empty = json::object();
    return empty;
  }
  static std::uint64_t Unsigned(const json &v, const std::string &path) {
    IHD_CHECK(v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0),
              ValidationError, "config: ", path,
              " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  const json &j_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path Resolve(const fs::path &base, const std::string &p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void PipelineConfig::Validate() const {
  phantom.Validate();
  encoder.Validate();
  augmentation.Validate();
  weights.Validate();
  ComputeSplitCounts(1, split);  // validates the fractions
  IHD_CHECK(synth_scans >= 1, ValidationError, "synth.scans must be >= 1");
  IHD_CHECK(cnn.batch_size >= 1, ValidationError, "cnn.batch_size must be >= 1");
  for (double lr : cnn.epoch_lrs)
    IHD_CHECK(lr > 0.0, ValidationError, "cnn.epoch_lrs must be positive");
  for (double lr : lstm_schedule.epoch_lrs)
    IHD_CHECK(lr > 0.0, ValidationError, "lstm.epoch_lrs must be positive");
  for (double s : normalization.stddev)
    IHD_CHECK(s > 0.0, ValidationError, "normalization.std must be positive");
  IHD_CHECK(selector.k >= 1 && selector.k <= encoder.embedding_dim,
            ValidationError, "selector.k=", selector.k, " must be in [1, ",
            encoder.embedding_dim, "] (the embedding dim)");
  IHD_CHECK(selector.pca_fit_samples >= 2, ValidationError,
            "selector.pca_fit_samples must be >= 2");
  LstmConfig l = lstm;
  l.input_dim = selector.k;
  l.Validate();
  IHD_CHECK(threshold > 0.0 && threshold < 1.0, ValidationError,
            "eval.threshold must be in (0, 1)");
}

PipelineConfig ParseConfig(const std::string &json_text, const fs::path &base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error &e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  ObjectReader root(doc, "config");

  {
    auto r = root.Sub("paths");
    std::string data = "data", work = "work";
    r.Get("data", data);
    r.Get("work", work);
    r.Finish();
    c.data_root = Resolve(base_dir, data);
    c.work_dir = Resolve(base_dir, work);
  }
  {
    auto r = root.Sub("seeds");
    r.Get("synth", c.seeds.synth);
    r.Get("cnn", c.seeds.cnn);
    r.Get("lstm", c.seeds.lstm);
    r.Finish();
  }
  {
    auto r = root.Sub("synth");
    r.Get("scans", c.synth_scans);
    auto s = r.Sub("split");
    s.Get("train", c.split.train);
    s.Get("val", c.split.val);
    s.Get("test", c.split.test);
    s.Finish();
    auto p = r.Sub("phantom");
    auto &ph = c.phantom;
    p.Get("side", ph.side);
    p.Get("min_slices", ph.min_slices);
    p.Get("max_slices", ph.max_slices);
    p.Get("air_hu", ph.air_hu);
    p.Get("brain_hu_min", ph.brain_hu_min);
    p.Get("brain_hu_max", ph.brain_hu_max);
    p.Get("skull_thickness", ph.skull_thickness);
    p.Get("skull_hu", ph.skull_hu);
    p.Get("lesion_hu_min", ph.lesion_hu_min);
    p.Get("lesion_hu_max", ph.lesion_hu_max);
    p.Get("noise_sigma", ph.noise_sigma);
    p.Get("positive_prob", ph.positive_prob);
    p.Get("subtype_weights", ph.subtype_weights);
    p.Get("min_lesion_slices", ph.min_lesion_slices);
    p.Get("max_lesion_slices", ph.max_lesion_slices);
    p.Get("lesion_size_min", ph.lesion_size_min);
    p.Get("lesion_size_max", ph.lesion_size_max);
    p.Finish();
    r.Finish();
  }
  {
    auto r = root.Sub("encoder");
    r.Get("stage_widths", c.encoder.stage_widths);
    r.Get("blocks_per_stage", c.encoder.blocks_per_stage);
    r.Get("cardinality", c.encoder.cardinality);
    r.Get("group_width", c.encoder.group_width);
    r.Get("embedding_dim", c.encoder.embedding_dim);
    r.Get("input_side", c.encoder.input_side);
    r.Finish();
  }
  {
    auto r = root.Sub("cnn");
    r.Get("epoch_lrs", c.cnn.epoch_lrs);
    r.Get("batch_size", c.cnn.batch_size);
    r.Get("augment", c.augment);
    auto a = r.Sub("augmentation");
    auto &ag = c.augmentation;
    a.Get("flip_prob", ag.flip_prob);
    a.Get("rotate_prob", ag.rotate_prob);
    a.Get("rotate_degrees", ag.rotate_degrees);
    a.Get("shift_prob", ag.shift_prob);
    a.Get("shift_fraction", ag.shift_fraction);
    a.Get("scale_prob", ag.scale_prob);
    a.Get("scale_delta", ag.scale_delta);
    a.Get("brightness_prob", ag.brightness_prob);
    a.Get("brightness_delta", ag.brightness_delta);
    a.Finish();
    r.Finish();
  }
  {
    auto r = root.Sub("normalization");
    r.Get("mean", c.normalization.mean);
    r.Get("std", c.normalization.stddev);
    r.Finish();
  }
  {
    auto r = root.Sub("selector");
    std::string method = SelectorMethodName(c.selector.method);
    std::string mode = HeadWeightModeName(c.selector.mode);
    r.Get("method", method);
    r.Get("k", c.selector.k);
    r.Get("mode", mode);
    r.Get("pca_fit_samples", c.selector.pca_fit_samples);
    r.Finish();
    c.selector.method = ParseSelectorMethod(method);
    c.selector.mode = ParseHeadWeightMode(mode);
  }
  {
    auto r = root.Sub("lstm");
    r.Get("layers", c.lstm.layers);
    r.Get("feature_width", c.lstm.feature_width);
    r.Get("dropout", c.lstm.dropout);
    r.Get("include_cnn_probs", c.lstm.include_cnn_probs);
    r.Get("epoch_lrs", c.lstm_schedule.epoch_lrs);
    r.Finish();
  }
  {
    auto r = root.Sub("eval");
    r.Get("class_weights", c.weights.values);
    r.Get("threshold", c.threshold);
    r.Finish();
  }
  root.Finish();
  c.lstm.input_dim = c.selector.k;
  c.Validate();
  return c;
}

PipelineConfig LoadConfig(const fs::path &path) {
  IHD_CHECK(fs::is_regular_file(path), ValidationError, "config file ",
            path.string(), " does not exist");
  return ParseConfig(ReadTextFile(path), fs::absolute(path).parent_path());
}

std::string DumpConfig(const PipelineConfig &c) {
  const auto &ph = c.phantom;
  const auto &ag = c.augmentation;
  json j = {
      {"paths", {{"data", c.data_root.string()}, {"work", c.work_dir.string()}}},
      {"seeds", {{"synth", c.seeds.synth}, {"cnn", c.seeds.cnn}, {"lstm", c.seeds.lstm}}},
      {"synth",
       {{"scans", c.synth_scans},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
        {"phantom",
         {{"side", ph.side},
          {"min_slices", ph.min_slices},
          {"max_slices", ph.max_slices},
          {"air_hu", ph.air_hu},
          {"brain_hu_min", ph.brain_hu_min},
          {"brain_hu_max", ph.brain_hu_max},
          {"skull_thickness", ph.skull_thickness},
          {"skull_hu", ph.skull_hu},
          {"lesion_hu_min", ph.lesion_hu_min},
          {"lesion_hu_max", ph.lesion_hu_max},
          {"noise_sigma", ph.noise_sigma},
          {"positive_prob", ph.positive_prob},
          {"subtype_weights", ph.subtype_weights},
          {"min_lesion_slices", ph.min_lesion_slices},
          {"max_lesion_slices", ph.max_lesion_slices},
          {"lesion_size_min", ph.lesion_size_min},
          {"lesion_size_max", ph.lesion_size_max}}}}},
      {"encoder",
       {{"stage_widths", c.encoder.stage_widths},
        {"blocks_per_stage", c.encoder.blocks_per_stage},
        {"cardinality", c.encoder.cardinality},
        {"group_width", c.encoder.group_width},
        {"embedding_dim", c.encoder.embedding_dim},
        {"input_side", c.encoder.input_side}}},
      {"cnn",
       {{"epoch_lrs", c.cnn.epoch_lrs},
        {"batch_size", c.cnn.batch_size},
        {"augment", c.augment},
        {"augmentation",
         {{"flip_prob", ag.flip_prob},
          {"rotate_prob", ag.rotate_prob},
          {"rotate_degrees", ag.rotate_degrees},
          {"shift_prob", ag.shift_prob},
          {"shift_fraction", ag.shift_fraction},
          {"scale_prob", ag.scale_prob},
          {"scale_delta", ag.scale_delta},
          {"brightness_prob", ag.brightness_prob},
          {"brightness_delta", ag.brightness_delta}}}}},
      {"normalization",
       {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}}},
      {"selector",
       {{"method", SelectorMethodName(c.selector.method)},
        {"k", c.selector.k},
        {"mode", HeadWeightModeName(c.selector.mode)},
        {"pca_fit_samples", c.selector.pca_fit_samples}}},
      {"lstm",
       {{"layers", c.lstm.layers},
        {"feature_width", c.lstm.feature_width},
        {"dropout", c.lstm.dropout},
        {"include_cnn_probs", c.lstm.include_cnn_probs},
        {"epoch_lrs", c.lstm_schedule.epoch_lrs}}},
      {"eval", {{"class_weights", c.weights.values}, {"threshold", c.threshold}}},
  };
  return j.dump(2);
}

void OverrideSeeds(PipelineConfig &config, std::uint64_t seed) {
  config.seeds.synth = DeriveSeed(seed, 0);
  config.seeds.cnn = DeriveSeed(seed, 1);
  config.seeds.lstm = DeriveSeed(seed, 2);
}

// ---- dataset access ----------------------------------------------------------

std::vector<std::string> ListSplit(const fs::path &root, const std::string &split) {
  const fs::path dir = root / split;
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto &entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ctv")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

LoadedScan LoadScan(const fs::path &root, const std::string &split,
                    const std::string &scan_id) {
  const fs::path base = root / split / scan_id;
  LoadedScan s;
  s.scan_id = scan_id;
  s.split = split;
  s.volume = ReadCtv(fs::path(base).replace_extension(".ctv"));
  const fs::path sidecar_path = fs::path(base).replace_extension(".json");
  IHD_CHECK(fs::is_regular_file(sidecar_path), ValidationError, "scan ",
            scan_id, ": label sidecar ", sidecar_path.string(), " is missing");
  LabelSidecar sidecar = ReadSidecar(sidecar_path);
  IHD_CHECK(sidecar.scan_id == scan_id, ValidationError, "scan ", scan_id,
            ": sidecar names scan '", sidecar.scan_id, "'");
  IHD_CHECK(sidecar.labels.size() == s.volume.slices, ValidationError, "scan ",
            scan_id, ": volume has ", s.volume.slices, " slices but sidecar has ",
            sidecar.labels.size(), " label rows");
  s.labels = std::move(sidecar.labels);
  return s;
}

namespace {

void RequireDataRoot(const PipelineConfig &c) {
  IHD_CHECK(fs::is_directory(c.data_root), ValidationError, "data root ",
            c.data_root.string(), " does not exist");
}

fs::path RequireFile(const fs::path &p, const char *what) {
  IHD_CHECK(fs::is_regular_file(p), ValidationError, what, " ", p.string(),
            " does not exist (run the earlier pipeline stage first)");
  return p;
}

void LogConfig(const PipelineConfig &c, const LogFn &log) {
  if (log) log("effective config:\n" + DumpConfig(c));
}

void Log(const LogFn &log, const std::string &s) {
  if (log) log(s);
}

std::vector<LoadedScan> LoadSplit(const PipelineConfig &c, const std::string &split) {
  std::vector<LoadedScan> out;
  for (const auto &id : ListSplit(c.data_root, split))
    out.push_back(LoadScan(c.data_root, split, id));
  return out;
}

std::vector<LabeledSlice> Flatten(const std::vector<LoadedScan> &scans) {
  std::vector<LabeledSlice> out;
  for (const auto &s : scans)
    for (std::size_t z = 0; z < s.volume.slices; ++z)
      out.push_back({s.volume.Slice(z), s.labels[z]});
  return out;
}

EncoderModel LoadEncoder(const PipelineConfig &c) {
  return EncoderModel::FromArrays(
      LoadCheckpoint(RequireFile(c.work_dir / "encoder.ckpt", "encoder checkpoint")));
}

std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Embeddings and probabilities pass through float32 in the features file;
// prediction applies the same rounding so train and inference inputs agree.
double RoundFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

ScanSequence EncodeScan(const EncoderModel &model, const PipelineConfig &c,
                        const LoadedScan &scan) {
  std::vector<Image> images;
  images.reserve(scan.volume.slices);
  for (std::size_t z = 0; z < scan.volume.slices; ++z)
    images.push_back(
        PrepareModelInput(scan.volume.Slice(z), c.encoder.input_side, c.normalization));
  const auto outputs = EncodeBatch(model, images, c.cnn.batch_size);
  ScanSequence seq;
  seq.scan_id = scan.scan_id;
  const std::size_t d = model.config.embedding_dim;
  seq.features = Matrix(outputs.size(), d);
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    for (std::size_t j = 0; j < d; ++j)
      seq.features.at(t, j) = RoundFloat(outputs[t].embedding[j]);
    PredictionVector p{};
    for (std::size_t k = 0; k < kNumClasses; ++k) p[k] = RoundFloat(outputs[t].probs[k]);
    seq.cnn_probs.push_back(p);
  }
  seq.labels = scan.labels;
  return seq;
}

std::vector<ScanSequence> Select(const FittedSelector &sel,
                                 const std::vector<ScanSequence> &in) {
  std::vector<ScanSequence> out = in;
  for (auto &s : out) s.features = sel.TransformRows(s.features);
  return out;
}

}  // namespace

// ---- features file -------------------------------------------------------------

std::vector<NamedArray> FeatureSetToArrays(const FeatureSet &set) {
  std::vector<NamedArray> out = {ScalarArray("features/dim", {static_cast<double>(set.dim)})};
  const std::vector<ScanSequence> *groups[] = {&set.train, &set.val, &set.test};
  for (std::size_t g = 0; g < 3; ++g)
    for (const auto &s : *groups[g]) {
      const std::string p = "scan/" + s.scan_id + "/";
      const auto t = static_cast<std::uint32_t>(s.length());
      out.push_back(ScalarArray(p + "split", {static_cast<double>(g)}));
      out.push_back({p + "embeddings",
                     {t, static_cast<std::uint32_t>(s.features.cols)},
                     std::vector<float>(s.features.values.begin(), s.features.values.end())});
      NamedArray probs{p + "probs", {t, kNumClasses}, {}};
      NamedArray labels{p + "labels", {t, kNumClasses}, {}};
      for (std::size_t i = 0; i < s.length(); ++i)
        for (std::size_t k = 0; k < kNumClasses; ++k) {
          probs.values.push_back(static_cast<float>(s.cnn_probs[i][k]));
          labels.values.push_back(static_cast<float>(s.labels[i][k]));
        }
      out.push_back(std::move(probs));
      out.push_back(std::move(labels));
    }
  return out;
}

FeatureSet FeatureSetFromArrays(const std::vector<NamedArray> &arrays) {
  FeatureSet set;
  const auto &dim = FindArray(arrays, "features/dim");
  IHD_CHECK(dim.values.size() == 1 && dim.values[0] >= 1, FormatError,
            "features/dim is invalid");
  set.dim = static_cast<std::size_t>(dim.values[0]);
  const std::string suffix = "/split";
  for (const auto &a : arrays) {
    if (a.name.rfind("scan/", 0) != 0 || a.name.size() <= suffix.size() + 5 ||
        a.name.compare(a.name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    const std::string id = a.name.substr(5, a.name.size() - 5 - suffix.size());
    IHD_CHECK(a.values.size() == 1 && (a.values[0] == 0.0f || a.values[0] == 1.0f ||
                                       a.values[0] == 2.0f),
              FormatError, "scan ", id, ": invalid split code");
    const std::string p = "scan/" + id + "/";
    const auto &emb = FindArray(arrays, p + "embeddings");
    const auto &probs = FindArray(arrays, p + "probs");
    const auto &labels = FindArray(arrays, p + "labels");
    IHD_CHECK(emb.dims.size() == 2 && emb.dims[0] >= 1 && emb.dims[1] == set.dim,
              FormatError, "scan ", id, ": embeddings must be [T>=1, ", set.dim, "]");
    const std::size_t t = emb.dims[0];
    IHD_CHECK(probs.dims == std::vector<std::uint32_t>({static_cast<std::uint32_t>(t), kNumClasses}) &&
                  labels.dims == probs.dims,
              FormatError, "scan ", id, ": probs and labels must be [", t, ", 6]");
    ScanSequence s;
    s.scan_id = id;
    s.features = Matrix(t, set.dim);
    std::copy(emb.values.begin(), emb.values.end(), s.features.values.begin());
    for (std::size_t i = 0; i < t; ++i) {
      PredictionVector pv{};
      LabelVector lv{};
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        const float pr = probs.values[i * kNumClasses + k];
        const float lb = labels.values[i * kNumClasses + k];
        IHD_CHECK(pr >= 0.0f && pr <= 1.0f, FormatError, "scan ", id,
                  ": probability outside [0, 1]");
        IHD_CHECK(lb == 0.0f || lb == 1.0f, FormatError, "scan ", id,
                  ": label is not 0/1");
        pv[k] = pr;
        lv[k] = static_cast<std::uint8_t>(lb);
      }
      s.cnn_probs.push_back(pv);
      s.labels.push_back(lv);
    }
    auto &group = a.values[0] == 0.0f ? set.train : a.values[0] == 1.0f ? set.val : set.test;
    group.push_back(std::move(s));
  }
  return set;
}

// ---- commands --------------------------------------------------------------------

DatasetSummary RunSynth(const PipelineConfig &config, std::size_t n_scans,
                        const LogFn &log) {
  IHD_CHECK(n_scans >= 1, ValidationError, "synth: number of scans must be >= 1");
  LogConfig(config, log);
  auto summary = GenerateDataset(config.seeds.synth, config.phantom, n_scans,
                                 config.split, config.data_root);
  std::ostringstream os;
  os << "synth: wrote " << n_scans << " scans to " << config.data_root.string()
     << " (train " << summary.counts.train << ", val " << summary.counts.val
     << ", test " << summary.counts.test << "; " << summary.positive_train_scans
     << " positive training scans)";
  Log(log, os.str());
  return summary;
}

EncoderTrainResult RunTrainCnn(const PipelineConfig &config, const LogFn &log) {
  RequireDataRoot(config);
  LogConfig(config, log);
  const auto train_scans = LoadSplit(config, "train");
  const auto val_scans = LoadSplit(config, "val");
  IHD_CHECK(!train_scans.empty(), ValidationError, "no training scans under ",
            (config.data_root / "train").string());
  const auto train = Flatten(train_scans);
  const auto val = Flatten(val_scans);
  Log(log, "train-cnn: " + std::to_string(train.size()) + " training slices, " +
               std::to_string(val.size()) + " validation slices");

  EncoderTrainOptions opt;
  opt.schedule = config.cnn;
  opt.augment = config.augment;
  opt.augmentation = config.augmentation;
  opt.normalization = config.normalization;
  opt.weights = config.weights;
  std::string history;
  opt.log = [&](const std::string &line) {
    history += line + "\n";
    Log(log, line);
  };
  Rng rng(config.seeds.cnn);
  auto result = TrainSliceModel(train, val, config.encoder, opt, rng);
  history += "best epoch " + std::to_string(result.best_epoch) + "\n";
  SaveCheckpoint(config.work_dir / "encoder.ckpt", result.model.ToArrays());
  WriteTextFile(config.work_dir / "train_cnn.log", history);
  Log(log, "train-cnn: best epoch " + std::to_string(result.best_epoch) +
               ", wrote " + (config.work_dir / "encoder.ckpt").string());
  return result;
}

FeatureSet RunExtract(const PipelineConfig &config, const LogFn &log) {
  RequireDataRoot(config);
  const EncoderModel model = LoadEncoder(config);
  LogConfig(config, log);
  FeatureSet set;
  set.dim = model.config.embedding_dim;
  std::vector<ScanSequence> *groups[] = {&set.train, &set.val, &set.test};
  std::size_t slices = 0;
  for (std::size_t g = 0; g < 3; ++g)
    for (const auto &id : ListSplit(config.data_root, kSplitNames[g])) {
      const auto scan = LoadScan(config.data_root, kSplitNames[g], id);
      groups[g]->push_back(EncodeScan(model, config, scan));
      slices += scan.volume.slices;
    }
  IHD_CHECK(slices > 0, ValidationError, "no scans found under ",
            config.data_root.string());
  SaveCheckpoint(config.work_dir / "features.ckpt", FeatureSetToArrays(set));
  Log(log, "extract: " + std::to_string(slices) + " slices, " +
               std::to_string(set.dim) + "-dim embeddings");
  return set;
}

FittedSelector RunFitSelector(const PipelineConfig &config, const LogFn &log) {
  const auto arrays =
      LoadCheckpoint(RequireFile(config.work_dir / "features.ckpt", "features file"));
  const FeatureSet set = FeatureSetFromArrays(arrays);
  IHD_CHECK(!set.train.empty(), ValidationError, "features file has no training scans");
  IHD_CHECK(config.selector.k <= set.dim, ValidationError, "selector.k=",
            config.selector.k, " exceeds the embedding dim ", set.dim);
  Matrix head;
  if (config.selector.method == SelectorMethod::kHeadWeight) {
    const EncoderModel model = LoadEncoder(config);
    IHD_CHECK(model.config.embedding_dim == set.dim, ValidationError,
              "encoder embedding dim ", model.config.embedding_dim,
              " differs from the features file (", set.dim, ")");
    Tensor h = HeadWeights(model);
    head = Matrix(h.dim(0), h.dim(1));
    std::copy(h.data().begin(), h.data().end(), head.values.begin());
  }
  LogConfig(config, log);
  std::size_t rows = 0;
  for (const auto &s : set.train) rows += s.length();
  Matrix features(rows, set.dim);
  std::size_t r = 0;
  for (const auto &s : set.train) {
    std::copy(s.features.values.begin(), s.features.values.end(),
              features.values.begin() + static_cast<std::ptrdiff_t>(r * set.dim));
    r += s.length();
  }
  FittedSelector sel = FitSelector(config.selector, features, head);
  SaveCheckpoint(config.work_dir / "selector.ckpt", sel.ToArrays());
  Log(log, "fit-selector: " + SelectorMethodName(config.selector.method) + " k=" +
               std::to_string(sel.output_dim()) + " from " + std::to_string(rows) +
               " training slices");
  return FittedSelector::FromArrays(sel.ToArrays());
}

LstmRunInfo RunTrainLstm(const PipelineConfig &config, const LogFn &log) {
  const auto arrays =
      LoadCheckpoint(RequireFile(config.work_dir / "features.ckpt", "features file"));
  const FittedSelector sel = FittedSelector::FromArrays(
      LoadCheckpoint(RequireFile(config.work_dir / "selector.ckpt", "selector checkpoint")));
  const FeatureSet set = FeatureSetFromArrays(arrays);
  IHD_CHECK(!set.train.empty(), ValidationError, "features file has no training scans");
  IHD_CHECK(sel.input_dim == set.dim, ValidationError, "selector expects ",
            sel.input_dim, "-dim embeddings, features file has ", set.dim);
  LogConfig(config, log);
  const auto train = Select(sel, set.train);
  const auto val = Select(sel, set.val);

  LstmConfig lc = config.lstm;
  lc.input_dim = sel.output_dim();
  ScanTrainOptions opt;
  opt.schedule = config.lstm_schedule;
  opt.weights = config.weights;
  std::string history;
  opt.log = [&](const std::string &line) {
    history += line + "\n";
    Log(log, line);
  };
  Rng rng(config.seeds.lstm);
  LstmRunInfo info;
  const auto start = std::chrono::steady_clock::now();
  info.result = TrainScanModel(train, val, lc, opt, rng);
  info.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history += "best epoch " + std::to_string(info.result.best_epoch) + "\n";
  SaveCheckpoint(config.work_dir / "lstm.ckpt", info.result.model.ToArrays());
  WriteTextFile(config.work_dir / "train_lstm.log", history);
  Log(log, "train-lstm: best epoch " + std::to_string(info.result.best_epoch) +
               ", input dim " + std::to_string(lc.input_dim));
  return info;
}

PredictOutput RunPredict(const PipelineConfig &config, const std::string &split,
                         const LogFn &log) {
  IHD_CHECK(split == "train" || split == "val" || split == "test", ValidationError,
            "unknown split '", split, "' (expected train, val or test)");
  RequireDataRoot(config);
  const EncoderModel encoder = LoadEncoder(config);
  const FittedSelector sel = FittedSelector::FromArrays(
      LoadCheckpoint(RequireFile(config.work_dir / "selector.ckpt", "selector checkpoint")));
  const ScanModel lstm = ScanModel::FromArrays(
      LoadCheckpoint(RequireFile(config.work_dir / "lstm.ckpt", "LSTM checkpoint")));
  IHD_CHECK(sel.input_dim == encoder.config.embedding_dim, ValidationError,
            "selector expects ", sel.input_dim, "-dim embeddings, encoder produces ",
            encoder.config.embedding_dim);
  IHD_CHECK(lstm.config.input_dim == sel.output_dim(), ValidationError,
            "LSTM expects ", lstm.config.input_dim, " inputs, selector produces ",
            sel.output_dim());
  const auto ids = ListSplit(config.data_root, split);
  IHD_CHECK(!ids.empty(), ValidationError, "no scans in split '", split, "' under ",
            config.data_root.string());
  std::vector<LoadedScan> scans;
  for (const auto &id : ids) scans.push_back(LoadScan(config.data_root, split, id));
  LogConfig(config, log);

  PredictOutput out;
  for (const auto &scan : scans) {
    ScanSequence seq = EncodeScan(encoder, config, scan);
    out.cnn_only.scans[scan.scan_id] = seq.cnn_probs;
    seq.features = sel.TransformRows(seq.features);
    out.joint.scans[scan.scan_id] = PredictScan(lstm, seq);
  }
  WritePredictions(config.work_dir / "predictions.csv", out.joint);
  WritePredictions(config.work_dir / "predictions_cnn.csv", out.cnn_only);
  Log(log, "predict: " + std::to_string(out.joint.slice_count()) + " slices from " +
               std::to_string(scans.size()) + " " + split + " scans");
  return out;
}

namespace {

LevelReport BuildLevel(const std::vector<PredictionVector> &preds,
                       const std::vector<LabelVector> &labels,
                       const ClassWeights &weights, double threshold) {
  LevelReport r;
  r.samples = preds.size();
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    auto &c = r.classes[k];
    std::vector<double> scores;
    std::vector<std::uint8_t> lab;
    double ll = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      scores.push_back(preds[i][k]);
      lab.push_back(labels[i][k]);
      ll += BinaryCrossEntropy(labels[i][k], preds[i][k]);
    }
    c.log_loss = preds.empty() ? 0.0 : ll / static_cast<double>(preds.size());
    const bool both = std::find(lab.begin(), lab.end(), 0) != lab.end() &&
                      std::find(lab.begin(), lab.end(), 1) != lab.end();
    if (both) c.auc = RocAuc(scores, lab);
    c.threshold = ComputeThresholdMetrics(preds, labels, threshold, k);
  }
  r.weighted_log_loss = WeightedMeanLogLoss(preds, labels, weights);
  return r;
}

std::string Opt(const std::optional<double> &v) {
  return v ? FormatDouble(*v) : std::string("na");
}

}  // namespace

EvalReport Evaluate(const PredictionTable &predictions, const fs::path &data_root,
                    const ClassWeights &weights, double threshold) {
  weights.Validate();
  IHD_CHECK(!predictions.scans.empty(), ValidationError, "no predictions to evaluate");
  std::vector<PredictionVector> slice_preds, scan_preds;
  std::vector<LabelVector> slice_labels, scan_labels;
  for (const auto &[id, rows] : predictions.scans) {
    std::optional<LabelSidecar> sidecar;
    for (const char *split : kSplitNames) {
      const fs::path p = data_root / split / (id + ".json");
      if (fs::is_regular_file(p)) {
        sidecar = ReadSidecar(p);
        break;
      }
    }
    IHD_CHECK(sidecar.has_value(), ValidationError, "scan ", id,
              ": no label sidecar under ", data_root.string());
    IHD_CHECK(sidecar->labels.size() == rows.size(), ValidationError, "scan ", id,
              ": ", rows.size(), " predicted slices but sidecar has ",
              sidecar->labels.size(), " label rows");
    slice_preds.insert(slice_preds.end(), rows.begin(), rows.end());
    slice_labels.insert(slice_labels.end(), sidecar->labels.begin(),
                        sidecar->labels.end());
    scan_preds.push_back(ScanAggregate(rows));
    LabelVector any{};
    for (const auto &l : sidecar->labels)
      for (std::size_t k = 0; k < kNumClasses; ++k) any[k] = any[k] | l[k];
    scan_labels.push_back(any);
  }
  EvalReport r;
  r.weights = weights;
  r.threshold = threshold;
  r.slice = BuildLevel(slice_preds, slice_labels, weights, threshold);
  r.scan = BuildLevel(scan_preds, scan_labels, weights, threshold);
  return r;
}

std::string FormatReport(const EvalReport &r) {
  std::ostringstream os;
  char line[256];
  os << "evaluation report\n";
  os << "threshold: " << FormatDouble(r.threshold) << "\n";
  os << "class weights:";
  for (std::size_t k = 0; k < kNumClasses; ++k)
    os << " " << kClassNames[k] << "=" << FormatDouble(r.weights.values[k]);
  os << "\n";
  const std::pair<const char *, const LevelReport *> levels[] = {
      {"slice", &r.slice}, {"scan", &r.scan}};
  for (const auto &[name, level] : levels) {
    os << "\n" << name << " level (" << level->samples << " samples)\n";
    std::snprintf(line, sizeof(line), "%-18s %10s %10s %12s %12s %10s\n", "class",
                  "roc_auc", "accuracy", "sensitivity", "specificity", "log_loss");
    os << line;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const auto &c = level->classes[k];
      std::snprintf(line, sizeof(line), "%-18s %10s %10.4f %12s %12s %10.6f\n",
                    std::string(kClassNames[k]).c_str(),
                    c.auc ? FormatDouble(std::round(*c.auc * 1e4) / 1e4).c_str() : "na",
                    c.threshold.accuracy,
                    c.threshold.sensitivity
                        ? FormatDouble(std::round(*c.threshold.sensitivity * 1e4) / 1e4).c_str()
                        : "na",
                    c.threshold.specificity
                        ? FormatDouble(std::round(*c.threshold.specificity * 1e4) / 1e4).c_str()
                        : "na",
                    c.log_loss);
      os << line;
    }
    os << "weighted mean log loss: " << FormatDouble(level->weighted_log_loss) << "\n";
  }
  return os.str();
}

std::string FormatReportKv(const EvalReport &r) {
  std::ostringstream os;
  os << "threshold=" << FormatDouble(r.threshold) << "\n";
  for (std::size_t k = 0; k < kNumClasses; ++k)
    os << "weight." << kClassNames[k] << "=" << FormatDouble(r.weights.values[k]) << "\n";
  const std::pair<const char *, const LevelReport *> levels[] = {
      {"slice", &r.slice}, {"scan", &r.scan}};
  for (const auto &[name, level] : levels) {
    const std::string p = name;
    os << p << ".samples=" << level->samples << "\n";
    os << p << ".weighted_log_loss=" << FormatDouble(level->weighted_log_loss) << "\n";
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const auto &c = level->classes[k];
      const std::string q = p + "." + std::string(kClassNames[k]) + ".";
      os << q << "auc=" << Opt(c.auc) << "\n";
      os << q << "accuracy=" << FormatDouble(c.threshold.accuracy) << "\n";
      os << q << "sensitivity=" << Opt(c.threshold.sensitivity) << "\n";
      os << q << "specificity=" << Opt(c.threshold.specificity) << "\n";
      os << q << "log_loss=" << FormatDouble(c.log_loss) << "\n";
    }
  }
  return os.str();
}

EvalReport RunEvaluate(const PipelineConfig &config,
                       const std::optional<fs::path> &predictions, const LogFn &log) {
  const fs::path path = predictions ? *predictions : config.work_dir / "predictions.csv";
  RequireFile(path, "predictions file");
  RequireDataRoot(config);
  const PredictionTable table = ReadPredictions(path);
  const EvalReport report = Evaluate(table, config.data_root, config.weights, config.threshold);
  LogConfig(config, log);
  // predictions.csv -> report.txt, predictions_cnn.csv -> report_cnn.txt
  std::string stem = path.stem().string();
  std::string suffix;
  if (stem.rfind("predictions", 0) == 0)
    suffix = stem.substr(11);
  else
    suffix = "_" + stem;
  WriteTextFile(config.work_dir / ("report" + suffix + ".txt"), FormatReport(report));
  WriteTextFile(config.work_dir / ("report" + suffix + ".kv"), FormatReportKv(report));
  Log(log, FormatReport(report));
  return report;
}

std::size_t ParseClassName(const std::string &name) {
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (name == kClassNames[k]) return k;
  throw ValidationError("unknown class '" + name +
                        "' (expected any, epidural, intraparenchymal, "
                        "intraventricular, subarachnoid or subdural)");
}

std::vector<fs::path> RunGradcam(const PipelineConfig &config,
                                 const GradcamRequest &request, const LogFn &log) {
  std::vector<std::size_t> classes;
  for (const auto &name : request.classes) classes.push_back(ParseClassName(name));
  if (classes.empty())
    for (std::size_t k = 0; k < kNumClasses; ++k) classes.push_back(k);
  RequireDataRoot(config);
  const EncoderModel model = LoadEncoder(config);
  std::optional<LoadedScan> scan;
  for (const char *split : kSplitNames)
    if (fs::is_regular_file(config.data_root / split / (request.scan_id + ".ctv"))) {
      scan = LoadScan(config.data_root, split, request.scan_id);
      break;
    }
  IHD_CHECK(scan.has_value(), ValidationError, "scan '", request.scan_id,
            "' not found under ", config.data_root.string());
  std::vector<std::size_t> slices = request.slices;
  if (slices.empty())
    for (std::size_t z = 0; z < scan->volume.slices; ++z) slices.push_back(z);
  for (std::size_t z : slices)
    IHD_CHECK(z < scan->volume.slices, ValidationError, "slice ", z,
              " out of range for scan ", request.scan_id, " with ",
              scan->volume.slices, " slices");
  IHD_CHECK(scan->volume.height == scan->volume.width, ValidationError,
            "Grad-CAM overlays need square slices");
  LogConfig(config, log);

  const fs::path dir = config.work_dir / "gradcam";
  std::vector<fs::path> written;
  for (std::size_t z : slices) {
    const HuSlice slice = scan->volume.Slice(z);
    const Image input = PrepareModelInput(slice, model.config.input_side, config.normalization);
    std::array<std::optional<Heatmap>, kNumClasses> maps;
    auto map_for = [&](std::size_t k) -> const Heatmap & {
      if (!maps[k]) maps[k] = GradCam(model, input, k);
      return *maps[k];
    };
    for (std::size_t k : classes) {
      Heatmap h;
      if (k == kAny) {
        std::vector<Heatmap> subs;
        for (std::size_t s = 1; s < kNumClasses; ++s) subs.push_back(map_for(s));
        h = CombineMax(subs, kAny);
      } else {
        h = map_for(k);
      }
      if (h.empty)
        Log(log, "warning: all-zero Grad-CAM map for scan " + request.scan_id +
                     " slice " + std::to_string(z) + " class " +
                     std::string(kClassNames[k]));
      if (h.height != slice.height) {
        Image im(1, h.height, h.width);
        im.values = h.values;
        im = ResizeBilinear(im, slice.height);
        h.height = h.width = slice.height;
        h.values = im.values;
        for (auto &v : h.values) v = std::clamp(v, 0.0, 1.0);
      }
      const fs::path out = dir / (request.scan_id + "_" + std::to_string(z) + "_" +
                                  std::string(kClassNames[k]) + ".png");
      WritePng(out, Overlay(h, slice));
      written.push_back(out);
    }
  }
  Log(log, "gradcam: wrote " + std::to_string(written.size()) + " overlays to " +
               dir.string());
  return written;
}

}  // namespace ihd
