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
#include <filesystem>
#include <set>

#include "doctest.h"
#include "error.hpp"
#include "preprocessing.hpp"
#include "scan_io.hpp"
#include "synthetic_data.hpp"

using namespace ihd;
namespace fs = std::filesystem;

namespace {

// Lesion and non-lesion brain pixels on one slice. Brain tissue is anything
// above -500 HU that is not lesion; the default phantom has no bone ring.
struct SliceStats {
  double lesion_mean = 0.0, tissue_mean = 0.0;
  std::size_t lesion = 0;
};

template <typename F>
SliceStats Stats(const GeneratedScan &scan, std::size_t z, F value) {
  const std::size_t n = scan.volume.height * scan.volume.width;
  const HuSlice slice = scan.volume.Slice(z);
  SliceStats s;
  double ls = 0.0, ts = 0.0;
  std::size_t tn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (scan.masks[z][i]) {
      ls += value(i);
      ++s.lesion;
    } else if (slice.values[i] > -500) {
      ts += value(i);
      ++tn;
    }
  }
  if (s.lesion) s.lesion_mean = ls / static_cast<double>(s.lesion);
  if (tn) s.tissue_mean = ts / static_cast<double>(tn);
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name)
      : path(fs::temp_directory_path() / ("ihd_test_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("zero positive probability plants nothing") {
  PhantomConfig c;
  c.positive_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const GeneratedScan scan = GenerateScan(rng, c, "x");
    for (std::size_t z = 0; z < scan.volume.slices; ++z) {
      CHECK(scan.labels[z] == LabelVector{});
      CHECK(std::ranges::none_of(scan.masks[z], [](std::uint8_t m) { return m != 0; }));
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  const PhantomConfig c;
  Rng a(5), b(5), d(6);
  const GeneratedScan s1 = GenerateScan(a, c, "s");
  const GeneratedScan s2 = GenerateScan(b, c, "s");
  const GeneratedScan s3 = GenerateScan(d, c, "s");
  CHECK(s1.volume.values == s2.volume.values);
  CHECK(s1.labels == s2.labels);
  CHECK(s1.masks == s2.masks);
  CHECK(s1.volume.values != s3.volume.values);
  const GeneratedScan r1 = RegenerateScan(9, c, 4);
  const GeneratedScan r2 = RegenerateScan(9, c, 4);
  CHECK(r1.scan_id == "scan0004");
  CHECK(r1.volume.values == r2.volume.values);
}

TEST_CASE("scan geometry respects the config") {
  const PhantomConfig c;
  for (std::size_t i = 0; i < 20; ++i) {
    const GeneratedScan s = RegenerateScan(11, c, i);
    CHECK(s.volume.height == 64);
    CHECK(s.volume.width == 64);
    CHECK(s.volume.slices >= 16);
    CHECK(s.volume.slices <= 24);
    CHECK(s.labels.size() == s.volume.slices);
    CHECK(s.masks.size() == s.volume.slices);
  }
}

TEST_CASE("labels, masks and lesion spans are consistent") {
  const PhantomConfig c;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    const GeneratedScan s = RegenerateScan(12, c, i);
    std::vector<std::size_t> positive_slices;
    for (std::size_t z = 0; z < s.volume.slices; ++z) {
      const auto &l = s.labels[z];
      const bool any_subtype = std::any_of(l.begin() + 1, l.end(), [](auto v) { return v; });
      CHECK(l[kAny] == (any_subtype ? 1 : 0));
      const bool has_mask = std::ranges::any_of(s.masks[z], [](auto m) { return m != 0; });
      CHECK(has_mask == (l[kAny] == 1));
      BoundingBox box;
      CHECK(s.LesionBox(z, box) == has_mask);
      if (has_mask) {
        positive_slices.push_back(z);
        CHECK(box.row_min <= box.row_max);
        CHECK(box.col_max < 64);
      }
    }
    if (positive_slices.empty()) continue;
    ++positives;
    // Every run of positive slices is at least 2 long.
    std::size_t run = 1;
    for (std::size_t k = 1; k <= positive_slices.size(); ++k) {
      if (k < positive_slices.size() && positive_slices[k] == positive_slices[k - 1] + 1) {
        ++run;
      } else {
        CHECK(run >= 2);
        run = 1;
      }
    }
  }
  CHECK(positives > 10);
}

TEST_CASE("lesion contrast lies within the configured HU bounds") {
  // Lesion minus tissue is at least 70 - 34 = 36 and at most 90 - 28 = 62 in
  // expectation, so [10, 75] holds with a wide margin for noise at sigma 2.
  const PhantomConfig c;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const GeneratedScan s = RegenerateScan(13, c, i);
    for (std::size_t z = 0; z < s.volume.slices; ++z) {
      const std::size_t off = z * 64 * 64;
      const auto st = Stats(s, z, [&](std::size_t p) { return s.volume.values[off + p]; });
      if (st.lesion < 4) continue;
      const double diff = st.lesion_mean - st.tissue_mean;
      CHECK(diff >= 10.0);
      CHECK(diff <= 75.0);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("lesions are brighter than tissue after brain windowing") {
  const PhantomConfig c;
  for (std::size_t i = 0; i < 30; ++i) {
    const GeneratedScan s = RegenerateScan(14, c, i);
    for (std::size_t z = 0; z < s.volume.slices; ++z) {
      if (s.labels[z][kAny] == 0) continue;
      const Image img = ComposeWindows(s.volume.Slice(z));
      const auto st = Stats(s, z, [&](std::size_t p) { return img.values[p]; });
      CHECK(st.lesion_mean > st.tissue_mean);
    }
  }
}

TEST_CASE("split counts") {
  const SplitCounts c = ComputeSplitCounts(10, {});
  CHECK(c.train == 8);
  CHECK(c.val == 1);
  CHECK(c.test == 1);
  const SplitCounts d = ComputeSplitCounts(200, {});
  CHECK(d.train + d.val + d.test == 200);
  CHECK_THROWS_AS(ComputeSplitCounts(10, {0.5, 0.1, 0.1}), ValidationError);
}

TEST_CASE("dataset on disk: 8/1/1 split, disjoint ids, readable files") {
  TempDir dir("synth10");
  const DatasetSummary s = GenerateDataset(3, PhantomConfig{}, 10, {}, dir.path);
  CHECK(s.train_ids.size() == 8);
  CHECK(s.val_ids.size() == 1);
  CHECK(s.test_ids.size() == 1);
  std::set<std::string> all;
  for (const auto *ids : {&s.train_ids, &s.val_ids, &s.test_ids})
    for (const auto &id : *ids) CHECK(all.insert(id).second);
  CHECK(all.size() == 10);
  for (const auto &id : s.val_ids) {
    const HuVolume v = ReadCtv(dir.path / "val" / (id + ".ctv"));
    const LabelSidecar side = ReadSidecar(dir.path / "val" / (id + ".json"));
    CHECK(side.scan_id == id);
    CHECK(side.labels.size() == v.slices);
    CHECK(side.split == std::optional<std::string>("val"));
  }
}

TEST_CASE("dataset regeneration is byte-identical") {
  TempDir a("synth_a"), b("synth_b");
  GenerateDataset(4, PhantomConfig{}, 5, {}, a.path);
  GenerateDataset(4, PhantomConfig{}, 5, {}, b.path);
  for (const auto &entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = b.path / fs::relative(entry.path(), a.path);
    CHECK(ReadFileBytes(entry.path()) == ReadFileBytes(other));
  }
  CHECK_THROWS_AS(GenerateDataset(4, PhantomConfig{}, 0, {}, a.path), ValidationError);
}

TEST_CASE("positive scan prevalence at n = 200 is within 10 points of the setting") {
  // Training-set prevalence only; the phantom is generated in memory.
  const PhantomConfig c;
  const SplitCounts counts = ComputeSplitCounts(200, {});
  std::size_t positive = 0;
  for (std::size_t i = 0; i < counts.train; ++i) {
    const GeneratedScan s = RegenerateScan(1, c, i);
    positive += std::ranges::any_of(s.labels, [](const LabelVector &l) { return l[kAny]; });
  }
  const double rate = static_cast<double>(positive) / static_cast<double>(counts.train);
  CHECK(std::abs(rate - c.positive_prob) <= 0.10);
}

TEST_CASE("invalid phantom configs are rejected") {
  PhantomConfig c;
  c.lesion_hu_min = 30.0;  // overlaps the tissue range
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = PhantomConfig{};
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = PhantomConfig{};
  c.subtype_weights = {0, 0, 0, 0, 0};
  CHECK_THROWS_AS(c.Validate(), ValidationError);
}
