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

// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Criteria 5-8 share one full pipeline run
// on 200 synthetic scans with the default config.

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "error.hpp"
#include "gradcam.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace ihd;

namespace {

// ---- pinned tolerances and targets ----------------------------------------

constexpr double kGradRelTol = 1e-4;
constexpr double kGradSuiteSeconds = 120.0;
constexpr double kEigenTol = 1e-8;
constexpr int kEigenCasesPerSize = 100;
constexpr double kAucTol = 1e-12;
constexpr int kAucSets = 200;
constexpr double kBceTol = 1e-6;
constexpr double kBceAllHalf = 4.1588831;
constexpr double kBceOneHot = 0.6321630;
constexpr double kMinAnyAuc = 0.95;
constexpr double kMaxWallSeconds = 20.0 * 60.0;
constexpr std::size_t kSelectedK = 16;
constexpr double kMaxAucDrop = 0.02;
constexpr double kMinSpeedup = 2.0;
constexpr double kCamDilation = 8.0;
constexpr double kMinCamHitRate = 0.70;
constexpr std::size_t kMinMutations = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

void Progress(const std::string &line) {
  // Epoch and stage summaries only; the config dump is long.
  if (line.rfind("effective config", 0) == 0) return;
  std::cerr << "  " << line << '\n';
}

// ---- 1: gradients ---------------------------------------------------------

Outcome GradientSuite() {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = oracle::RunGradientSuite();
  const double secs = Seconds(start);
  double worst = 0.0;
  std::string worst_name;
  std::size_t elements = 0;
  for (const auto &c : cases) {
    elements += c.result.elements;
    if (c.result.max_rel_error >= worst) {
      worst = c.result.max_rel_error;
      worst_name = c.name;
    }
  }
  return {worst < kGradRelTol && secs < kGradSuiteSeconds,
          std::to_string(cases.size()) + " cases, " + std::to_string(elements) +
              " elements, max rel error " + Fmt(worst, 3) + " (" + worst_name + ") < " +
              Fmt(kGradRelTol) + ", " + Fmt(secs, 3) + " s < " + Fmt(kGradSuiteSeconds) + " s"};
}

// ---- 2: windowing ---------------------------------------------------------

// Reference clamped linear map, written out independently.
double WindowRef(double hu, double center, double width) {
  const double v = (hu - (center - width / 2.0)) / width;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

Outcome Windowing() {
  std::size_t checks = 0, bad = 0;
  auto expect = [&](double got, double want) {
    ++checks;
    if (got != want) ++bad;
  };
  const WindowSpec brain{40.0, 80.0};
  const std::pair<double, double> examples[] = {{40, 0.5}, {0, 0.0}, {60, 0.75}, {500, 1.0}};
  for (auto [hu, want] : examples) {
    expect(ApplyWindow(hu, brain), want);
    expect(ApplyWindow(hu, brain), WindowRef(hu, 40, 80));
  }
  const double windows[3][2] = {{40, 80}, {80, 200}, {40, 380}};
  for (std::int16_t hu : {std::int16_t{0}, std::int16_t{40}, std::int16_t{1000}}) {
    const HuSlice s{4, 4, std::vector<std::int16_t>(16, hu)};
    const Image img = ComposeWindows(s);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 16; ++i)
        expect(img.values[c * 16 + i], WindowRef(hu, windows[c][0], windows[c][1]));
  }
  // Literal values of the compose examples.
  const Image zero = ComposeWindows(HuSlice{1, 1, {0}});
  expect(zero.values[0], 0.0);
  expect(zero.values[1], 0.1);
  expect(zero.values[2], 150.0 / 380.0);
  expect(ComposeWindows(HuSlice{1, 1, {40}}).values[0], 0.5);
  for (double v : ComposeWindows(HuSlice{1, 1, {1000}}).values) expect(v, 1.0);
  return {bad == 0, std::to_string(checks - bad) + "/" + std::to_string(checks) +
                        " values bit-identical to the clamped linear map"};
}

// ---- 3: PCA eigen oracle -------------------------------------------------

Outcome PcaOracle() {
  Rng rng(2026);
  double worst_value = 0.0, worst_vector = 0.0, worst_ortho = 0.0, worst_trace = 0.0;
  bool ordered = true;
  std::size_t cases = 0;
  for (std::size_t n : {2, 3}) {
    for (int it = 0; it < kEigenCasesPerSize; ++it) {
      // Covariance of n variables from 4n random samples.
      const std::size_t m = 4 * n;
      std::vector<std::vector<double>> x(m, std::vector<double>(n));
      for (auto &row : x)
        for (auto &v : row) v = rng.Uniform(-2.0, 2.0);
      std::vector<std::vector<double>> cov(n, std::vector<double>(n, 0.0));
      std::vector<double> mean(n, 0.0);
      for (const auto &row : x)
        for (std::size_t j = 0; j < n; ++j) mean[j] += row[j] / static_cast<double>(m);
      for (const auto &row : x)
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < n; ++b)
            cov[a][b] += (row[a] - mean[a]) * (row[b] - mean[b]) / static_cast<double>(m - 1);
      Matrix mat(n, n);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) mat.at(a, b) = cov[a][b];

      const EigenResult jac = JacobiEigen(mat);
      const auto ref = oracle::BruteForceEigen(cov);
      double trace = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        trace += cov[i][i];
        sum += jac.values[i];
        worst_value = std::max(worst_value, std::abs(jac.values[i] - ref[i].value));
        if (i > 0 && jac.values[i] > jac.values[i - 1]) ordered = false;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += jac.vectors.at(i, j) * ref[i].vector[j];
        const double sign = dot < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j)
          worst_vector = std::max(
              worst_vector, std::abs(jac.vectors.at(i, j) - sign * ref[i].vector[j]));
        for (std::size_t k = 0; k < n; ++k) {
          double g = 0.0;
          for (std::size_t j = 0; j < n; ++j) g += jac.vectors.at(i, j) * jac.vectors.at(k, j);
          worst_ortho = std::max(worst_ortho, std::abs(g - (i == k ? 1.0 : 0.0)));
        }
      }
      worst_trace = std::max(worst_trace, std::abs(trace - sum));
      ++cases;
    }
  }
  const bool pass = worst_value < kEigenTol && worst_vector < kEigenTol &&
                    worst_ortho < kEigenTol && worst_trace < kEigenTol && ordered;
  return {pass, std::to_string(cases) + " matrices: eigenvalue err " + Fmt(worst_value, 3) +
                    ", eigenvector err " + Fmt(worst_vector, 3) + ", orthonormality " +
                    Fmt(worst_ortho, 3) + ", trace " + Fmt(worst_trace, 3) + " (all < " +
                    Fmt(kEigenTol) + "), ordering " + (ordered ? "ok" : "VIOLATED")};
}

// ---- 4: metric oracle ---------------------------------------------------

Outcome MetricOracle() {
  Rng rng(4);
  double worst = 0.0;
  for (int set = 0; set < kAucSets; ++set) {
    const std::size_t n = static_cast<std::size_t>(rng.UniformInt(2, 80));
    // Coarse scores on about half the sets force ties.
    const bool coarse = set % 2 == 0;
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? std::round(rng.Uniform(0, 1) * 5.0) / 5.0 : rng.Uniform(0, 1);
      labels[i] = rng.Bernoulli(0.4) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    worst = std::max(worst, std::abs(RocAuc(scores, labels) - oracle::BruteForceAuc(scores, labels)));
  }
  PredictionVector half;
  half.fill(0.5);
  const double bce_half = MultiBce({1, 0, 1, 0, 0, 1}, half);
  const double bce_hot = MultiBce({1, 0, 0, 0, 0, 0}, {0.9, 0.1, 0.1, 0.1, 0.1, 0.1});
  const double e1 = std::abs(bce_half - kBceAllHalf);
  const double e2 = std::abs(bce_hot - kBceOneHot);
  // The literals themselves against their closed forms.
  const bool literals = std::abs(6.0 * std::numbers::ln2 - kBceAllHalf) < kBceTol &&
                        std::abs(-6.0 * std::log(0.9) - kBceOneHot) < kBceTol;
  return {worst <= kAucTol && e1 < kBceTol && e2 < kBceTol && literals,
          "AUC vs brute force on " + std::to_string(kAucSets) + " sets: max err " +
              Fmt(worst, 3) + " <= " + Fmt(kAucTol) + "; multi_bce errors " + Fmt(e1, 3) +
              ", " + Fmt(e2, 3) + " < " + Fmt(kBceTol)};
}

// ---- full pipeline ----------------------------------------------------------

struct ChainRun {
  PipelineConfig config;
  double wall_seconds = 0.0;
  double lstm_seconds = 0.0;
  EvalReport joint, cnn;
};

ChainRun RunChain(PipelineConfig config, const fs::path &root) {
  fs::remove_all(root);
  config.data_root = root / "data";
  config.work_dir = root / "work";
  ChainRun run;
  run.config = config;
  const auto start = std::chrono::steady_clock::now();
  RunSynth(config, config.synth_scans, Progress);
  RunTrainCnn(config, Progress);
  RunExtract(config, Progress);
  RunFitSelector(config, Progress);
  run.lstm_seconds = RunTrainLstm(config, Progress).train_seconds;
  RunPredict(config, "test", Progress);
  run.joint = RunEvaluate(config, std::nullopt, {});
  run.cnn = RunEvaluate(config, config.work_dir / "predictions_cnn.csv", {});
  run.wall_seconds = Seconds(start);
  return run;
}

double AnyAuc(const EvalReport &r) {
  return r.slice.classes[kAny].auc.value_or(std::numeric_limits<double>::quiet_NaN());
}

Outcome EndToEnd(const ChainRun &run) {
  const double auc = AnyAuc(run.joint);
  const double joint = run.joint.slice.weighted_log_loss;
  const double cnn = run.cnn.slice.weighted_log_loss;
  const bool a = auc >= kMinAnyAuc, b = joint <= cnn, c = run.wall_seconds <= kMaxWallSeconds;
  return {a && b && c,
          std::string("(a) any AUC ") + Fmt(auc) + " >= " + Fmt(kMinAnyAuc) + (a ? " ok" : " FAIL") +
              "; (b) joint loss " + Fmt(joint) + " <= CNN-only " + Fmt(cnn) + (b ? " ok" : " FAIL") +
              "; (c) wall " + Fmt(run.wall_seconds, 4) + " s <= " + Fmt(kMaxWallSeconds) + " s" +
              (c ? " ok" : " FAIL")};
}

// ---- 6: feature-selection efficiency ----------------------------------------

struct StageThree {
  double seconds = 0.0;
  double auc = 0.0;
};

StageThree RunStageThree(const ChainRun &base, std::size_t k, const fs::path &work) {
  PipelineConfig c = base.config;
  c.work_dir = work;
  c.selector.method = SelectorMethod::kPca;
  c.selector.k = k;
  fs::remove_all(work);
  fs::create_directories(work);
  for (const char *f : {"encoder.ckpt", "features.ckpt"})
    fs::copy_file(base.config.work_dir / f, work / f);
  RunFitSelector(c, {});
  StageThree out;
  out.seconds = RunTrainLstm(c, {}).train_seconds;
  RunPredict(c, "test", {});
  out.auc = AnyAuc(RunEvaluate(c, std::nullopt, {}));
  return out;
}

Outcome SelectionEfficiency(const ChainRun &base, const fs::path &root) {
  const std::size_t d = base.config.encoder.embedding_dim;
  const StageThree small = RunStageThree(base, kSelectedK, root / "work_k16");
  const StageThree full = RunStageThree(base, d, root / "work_kD");
  const double drop = std::abs(full.auc - small.auc);
  const double speedup = full.seconds / small.seconds;
  return {drop <= kMaxAucDrop && speedup >= kMinSpeedup,
          "k=" + std::to_string(kSelectedK) + " AUC " + Fmt(small.auc) + " vs k=" +
              std::to_string(d) + " AUC " + Fmt(full.auc) + " (|diff| " + Fmt(drop, 3) +
              " <= " + Fmt(kMaxAucDrop) + (drop <= kMaxAucDrop ? " ok" : " FAIL") +
              "); stage-3 time " + Fmt(small.seconds, 3) + " s vs " + Fmt(full.seconds, 3) +
              " s, speedup " + Fmt(speedup, 3) + "x >= " + Fmt(kMinSpeedup) + "x" +
              (speedup >= kMinSpeedup ? " ok" : " FAIL")};
}

// ---- 7: Grad-CAM localization ---------------------------------------------

Outcome CamLocalization(const ChainRun &run) {
  const PipelineConfig &c = run.config;
  const EncoderModel model =
      EncoderModel::FromArrays(LoadCheckpoint(c.work_dir / "encoder.ckpt"));
  const PredictionTable cnn = ReadPredictions(c.work_dir / "predictions_cnn.csv");
  std::size_t hits = 0, total = 0, empty = 0;
  for (const auto &id : ListSplit(c.data_root, "test")) {
    const std::size_t index = std::stoul(id.substr(4));
    const GeneratedScan truth = RegenerateScan(c.seeds.synth, c.phantom, index);
    const LoadedScan scan = LoadScan(c.data_root, "test", id);
    IHD_CHECK(truth.volume.values == scan.volume.values, RuntimeError,
              "regenerated scan ", id, " differs from the file on disk");
    const auto &probs = cnn.scans.at(id);
    for (std::size_t z = 0; z < scan.volume.slices; ++z) {
      if (!scan.labels[z][kAny] || probs[z][kAny] < c.threshold) continue;
      BoundingBox box;
      IHD_CHECK(truth.LesionBox(z, box), RuntimeError, "positive slice without a lesion");
      ++total;
      const HuSlice slice = scan.volume.Slice(z);
      const Image input = PrepareModelInput(slice, model.config.input_side, c.normalization);
      std::vector<Heatmap> subtypes;
      for (std::size_t k = 1; k < kNumClasses; ++k) subtypes.push_back(GradCam(model, input, k));
      const Heatmap map = CombineMax(subtypes, kAny);
      if (map.empty) {
        ++empty;
        continue;
      }
      const auto [r, col] = CenterOfMass(map);
      if (r >= box.row_min - kCamDilation && r <= box.row_max + kCamDilation &&
          col >= box.col_min - kCamDilation && col <= box.col_max + kCamDilation)
        ++hits;
    }
  }
  const double rate = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  return {total > 0 && rate >= kMinCamHitRate,
          std::to_string(hits) + "/" + std::to_string(total) +
              " true-positive test slices with center of mass in the lesion box +" +
              Fmt(kCamDilation) + " px (" + Fmt(100.0 * rate, 3) + "% >= " +
              Fmt(100.0 * kMinCamHitRate) + "%), " + std::to_string(empty) + " empty maps"};
}

// ---- 8: determinism -------------------------------------------------------

std::map<std::string, std::uint32_t> Checksums(const fs::path &root) {
  std::map<std::string, std::uint32_t> out;
  for (const auto &e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto bytes = ReadFileBytes(e.path());
    out[fs::relative(e.path(), root).generic_string()] =
        static_cast<std::uint32_t>(crc32(0, bytes.data(), static_cast<uInt>(bytes.size())));
  }
  return out;
}

Outcome Determinism(const ChainRun &first, const fs::path &root) {
  const fs::path a = first.config.work_dir.parent_path();
  const ChainRun second = RunChain(first.config, root / "repeat");
  const auto ca = Checksums(a / "work"), cb = Checksums(root / "repeat" / "work");
  const auto da = Checksums(a / "data"), db = Checksums(root / "repeat" / "data");
  std::size_t mismatched = 0;
  std::string first_bad;
  for (const auto &[name, sum] : ca) {
    auto it = cb.find(name);
    if (it == cb.end() || it->second != sum) {
      if (first_bad.empty()) first_bad = name;
      ++mismatched;
    }
  }
  const bool same_files = ca.size() == cb.size() && da == db;
  std::ostringstream os;
  os << ca.size() << " work artifacts and " << da.size() << " data files compared, "
     << mismatched << " mismatched";
  if (!first_bad.empty()) os << " (first: " << first_bad << ")";
  for (const char *f : {"lstm.ckpt", "predictions.csv", "report.kv"})
    if (ca.count(f)) os << ", " << f << " crc32 " << std::hex << ca.at(f) << std::dec;
  return {mismatched == 0 && same_files, os.str()};
}

// ---- 9: formats --------------------------------------------------------------

HuVolume RandomVolume(Rng &rng, std::size_t n, std::size_t h, std::size_t w) {
  HuVolume v{n, h, w, {}};
  for (std::size_t i = 0; i < n * h * w; ++i)
    v.values.push_back(static_cast<std::int16_t>(rng.UniformInt(-32768, 32767)));
  v.values.front() = -32768;
  v.values.back() = 32767;
  return v;
}

std::vector<NamedArray> RandomArrays(Rng &rng, std::size_t count) {
  std::vector<NamedArray> arrays;
  for (std::size_t a = 0; a < count; ++a) {
    NamedArray arr;
    arr.name = "layer" + std::to_string(a) + "/w";
    const std::size_t rank = static_cast<std::size_t>(rng.UniformInt(1, 3));
    std::size_t n = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      arr.dims.push_back(static_cast<std::uint32_t>(rng.UniformInt(1, 4)));
      n *= arr.dims.back();
    }
    for (std::size_t i = 0; i < n; ++i)
      arr.values.push_back(static_cast<float>(rng.Normal(0.0, 3.0)));
    arrays.push_back(std::move(arr));
  }
  arrays.front().values.front() = -0.0f;
  arrays.back().values.back() = std::numeric_limits<float>::denorm_min();
  return arrays;
}

bool SameArrays(const std::vector<NamedArray> &a, const std::vector<NamedArray> &b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].dims != b[i].dims ||
        a[i].values.size() != b[i].values.size() ||
        std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * 4) != 0)
      return false;
  return true;
}

PredictionTable RandomTable(Rng &rng) {
  PredictionTable t;
  for (int s = 0; s < 3; ++s) {
    auto &rows = t.scans["scan" + std::to_string(100 + s)];
    for (int z = 0; z < 5 + s; ++z) {
      PredictionVector p;
      for (auto &v : p) v = static_cast<double>(rng.UniformInt(0, 1000000)) / 1e6;
      rows.push_back(p);
    }
  }
  return t;
}

// Byte offsets of the structural header fields of an encoded checkpoint:
// the file header plus every entry's name length, rank and dims. Name bytes
// and payloads carry no redundancy and are excluded.
std::vector<std::size_t> CheckpointHeaderOffsets(const std::vector<NamedArray> &arrays) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < 10; ++i) out.push_back(i);
  std::size_t at = 10;
  for (const auto &a : arrays) {
    out.push_back(at);
    out.push_back(at + 1);
    at += 2 + a.name.size();
    for (std::size_t i = 0; i < 1 + 4 * a.dims.size(); ++i) out.push_back(at + i);
    at += 1 + 4 * a.dims.size() + 4 * a.values.size();
  }
  return out;
}

struct FuzzTally {
  std::size_t mutations = 0, rejected = 0;
  std::string first_accepted;
};

void Fuzz(FuzzTally &tally, const std::vector<std::uint8_t> &bytes,
          const std::vector<std::size_t> &offsets, Rng &rng, const std::string &what,
          const std::function<void(const std::vector<std::uint8_t> &)> &decode) {
  for (std::size_t off : offsets) {
    std::set<std::uint8_t> values;
    for (int bit = 0; bit < 8; ++bit) values.insert(static_cast<std::uint8_t>(bytes[off] ^ (1u << bit)));
    while (values.size() < 16) {
      const auto v = static_cast<std::uint8_t>(rng.UniformInt(0, 255));
      if (v != bytes[off]) values.insert(v);
    }
    for (std::uint8_t v : values) {
      auto mutated = bytes;
      mutated[off] = v;
      ++tally.mutations;
      try {
        decode(mutated);
        if (tally.first_accepted.empty())
          tally.first_accepted = what + " byte " + std::to_string(off) + " = " + std::to_string(v);
      } catch (const Error &) {
        ++tally.rejected;
      }
    }
  }
}

Outcome Formats() {
  Rng rng(9);
  std::size_t trips = 0, trip_fail = 0;
  auto trip = [&](bool ok) {
    ++trips;
    if (!ok) ++trip_fail;
  };
  const fs::path dir = fs::temp_directory_path() / "ihd_acceptance_formats";
  fs::create_directories(dir);
  std::vector<std::vector<std::uint8_t>> ctvs, ckpts;
  std::vector<std::string> csvs;
  for (int i = 0; i < 5; ++i) {
    const HuVolume v = RandomVolume(rng, 1 + i, 2 + i, 3 + 2 * i);
    const auto bytes = EncodeCtv(v);
    const HuVolume back = DecodeCtv(bytes);
    trip(back.slices == v.slices && back.height == v.height && back.width == v.width &&
         back.values == v.values);
    WriteCtv(dir / "v.ctv", v);
    trip(ReadCtv(dir / "v.ctv").values == v.values && ReadFileBytes(dir / "v.ctv") == bytes);
    ctvs.push_back(bytes);

    const auto arrays = RandomArrays(rng, 2 + i);
    const auto cbytes = EncodeCheckpoint(arrays);
    trip(SameArrays(DecodeCheckpoint(cbytes), arrays));
    SaveCheckpoint(dir / "c.ckpt", arrays);
    trip(SameArrays(LoadCheckpoint(dir / "c.ckpt"), arrays));
    ckpts.push_back(cbytes);

    const PredictionTable t = RandomTable(rng);
    const std::string text = FormatPredictions(t);
    trip(ParsePredictions(text) == t && FormatPredictions(ParsePredictions(text)) == text);
    csvs.push_back(text);
  }
  fs::remove_all(dir);

  FuzzTally tally;
  std::vector<std::size_t> ctv_header(16);
  for (std::size_t i = 0; i < 16; ++i) ctv_header[i] = i;
  std::vector<std::size_t> csv_header(9);  // "ID,Label\n"
  for (std::size_t i = 0; i < 9; ++i) csv_header[i] = i;
  Rng frng(99);
  for (std::size_t i = 0; i < ctvs.size(); ++i) {
    Fuzz(tally, ctvs[i], ctv_header, frng, "ctv", [](const auto &b) { DecodeCtv(b); });
    Fuzz(tally, ckpts[i], CheckpointHeaderOffsets(DecodeCheckpoint(ckpts[i])), frng, "checkpoint",
         [](const auto &b) { DecodeCheckpoint(b); });
    const std::vector<std::uint8_t> text(csvs[i].begin(), csvs[i].end());
    Fuzz(tally, text, csv_header, frng, "csv", [](const auto &b) {
      ParsePredictions(std::string(b.begin(), b.end()));
    });
  }
  const bool pass = trip_fail == 0 && tally.mutations >= kMinMutations &&
                    tally.rejected == tally.mutations;
  std::string detail = std::to_string(trips - trip_fail) + "/" + std::to_string(trips) +
                       " round trips exact; " + std::to_string(tally.rejected) + "/" +
                       std::to_string(tally.mutations) + " header mutations rejected (>= " +
                       std::to_string(kMinMutations) + " required)";
  if (!tally.first_accepted.empty()) detail += ", first accepted: " + tally.first_accepted;
  return {pass, detail};
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"acceptance checks"};
  std::string config_path, work_root = (fs::temp_directory_path() / "ihd_acceptance").string();
  std::vector<int> only;
  app.add_option("--config", config_path, "pipeline config for criteria 5-8")->required();
  app.add_option("--work", work_root, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::ranges::find(only, c) != only.end(); };
  bool all_pass = true;
  auto report = [&](int id, const std::string &name, const std::function<Outcome()> &body) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = body();
    } catch (const std::exception &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name
              << ": " << o.detail << std::endl;
  };

  report(1, "gradient suite", GradientSuite);
  report(2, "windowing", Windowing);
  report(3, "PCA oracle", PcaOracle);
  report(4, "metric oracle", MetricOracle);

  if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    const fs::path root = work_root;
    std::optional<ChainRun> run;
    std::string failure;
    try {
      std::cerr << "running the full pipeline on the default config\n";
      run = RunChain(LoadConfig(config_path), root / "main");
    } catch (const std::exception &e) {
      failure = e.what();
    }
    auto need_run = [&](auto fn) {
      return [&, fn]() -> Outcome {
        if (!run) return {false, "pipeline run failed: " + failure};
        return fn();
      };
    };
    report(5, "end-to-end synthetic run", need_run([&] { return EndToEnd(*run); }));
    report(6, "feature-selection efficiency",
           need_run([&] { return SelectionEfficiency(*run, root); }));
    report(7, "Grad-CAM localization", need_run([&] { return CamLocalization(*run); }));
    report(8, "determinism", need_run([&] { return Determinism(*run, root); }));
  }
  report(9, "format robustness", Formats);

  std::cout << (all_pass ? "acceptance: all selected criteria passed"
                         : "acceptance: at least one criterion failed")
            << std::endl;
  return all_pass ? 0 : 1;
}
