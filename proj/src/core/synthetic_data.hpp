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
#ifndef IHD_CORE_SYNTHETIC_DATA_HPP_
#define IHD_CORE_SYNTHETIC_DATA_HPP_

// Synthetic head CT phantoms with planted hyperdense lesions.
//
// The five lesion shapes are a proxy vocabulary for the five hemorrhage
// subtypes, chosen so that the multi-label task is learnable and lesions can
// be localized. They are NOT clinically realistic:
//   epidural          biconvex lens against the brain edge
//   intraparenchymal  blob deep in the parenchyma
//   intraventricular  blob near the center
//   subarachnoid      thin rim segment along the brain edge
//   subdural          long thin crescent along the brain edge

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rng.hpp"
#include "types.hpp"

namespace ihd {

struct PhantomConfig {
  std::size_t side = 64;
  std::size_t min_slices = 16;
  std::size_t max_slices = 24;
  double air_hu = -1000.0;
  double brain_hu_min = 28.0;  // per-scan tissue level, uniform
  double brain_hu_max = 34.0;
  // Bone ring outside the brain, in pixels at side 64. Off by default: with a
  // 900 HU ring the from-scratch encoder does not learn under the default
  // schedule (see README).
  double skull_thickness = 0.0;
  double skull_hu = 900.0;
  double lesion_hu_min = 70.0;  // per-lesion blood level, uniform
  double lesion_hu_max = 90.0;
  double noise_sigma = 2.0;
  double lesion_size_min = 1.35;  // per-lesion size factor, uniform
  double lesion_size_max = 1.9;
  double positive_prob = 0.5;  // per scan
  // Relative draw weights of the subtypes (EPH, IPH, IVH, SAH, SDH).
  std::array<double, 5> subtype_weights = {1.0, 5.0, 5.0, 5.0, 5.0};
  std::size_t min_lesion_slices = 3;
  std::size_t max_lesion_slices = 8;

  void Validate() const;
};

struct BoundingBox {
  std::size_t row_min = 0, col_min = 0, row_max = 0, col_max = 0;  // inclusive
};

struct GeneratedScan {
  std::string scan_id;
  HuVolume volume;
  std::vector<LabelVector> labels;  // per slice
  // Per slice, H*W lesion mask (1 = lesion). Ground truth for localization
  // checks only; never used for training.
  std::vector<std::vector<std::uint8_t>> masks;

  // Bounding box of all lesion pixels on a slice; false when none.
  bool LesionBox(std::size_t slice, BoundingBox &box) const;
};

GeneratedScan GenerateScan(Rng &rng, const PhantomConfig &config,
                           const std::string &scan_id);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

SplitCounts ComputeSplitCounts(std::size_t n_scans, const SplitFractions &f);

// Scan `index` of a dataset generated from `seed`.
std::string SyntheticScanId(std::size_t index);
GeneratedScan RegenerateScan(std::uint64_t seed, const PhantomConfig &config,
                             std::size_t index);

struct DatasetSummary {
  SplitCounts counts;
  std::vector<std::string> train_ids, val_ids, test_ids;
  std::size_t positive_train_scans = 0;
};

// Writes <root>/{train,val,test}/<scan_id>.ctv and <scan_id>.json.
DatasetSummary GenerateDataset(std::uint64_t seed, const PhantomConfig &config,
                               std::size_t n_scans,
                               const SplitFractions &fractions,
                               const std::filesystem::path &root);

}  // namespace ihd

#endif  // IHD_CORE_SYNTHETIC_DATA_HPP_
