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
#include "synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "error.hpp"
#include "scan_io.hpp"

namespace ihd {

void PhantomConfig::Validate() const {
  IHD_CHECK(side >= 16, ValidationError, "phantom side must be >= 16");
  IHD_CHECK(min_slices >= 4 && min_slices <= max_slices, ValidationError,
            "phantom slice range [", min_slices, ", ", max_slices,
            "] invalid (need 4 <= min <= max)");
  IHD_CHECK(brain_hu_min <= brain_hu_max && lesion_hu_min <= lesion_hu_max,
            ValidationError, "phantom HU ranges must be ordered");
  IHD_CHECK(lesion_hu_min > brain_hu_max, ValidationError,
            "lesion HU range must lie strictly above brain tissue range");
  IHD_CHECK(noise_sigma >= 0.0, ValidationError, "noise sigma must be >= 0");
  IHD_CHECK(skull_thickness >= 0.0 && skull_thickness <= 8.0, ValidationError,
            "skull thickness must be in [0, 8]");
  IHD_CHECK(lesion_size_min > 0.0 && lesion_size_min <= lesion_size_max &&
                lesion_size_max <= 2.5,
            ValidationError, "lesion size range [", lesion_size_min, ", ",
            lesion_size_max, "] invalid (need 0 < min <= max <= 2.5)");
  IHD_CHECK(positive_prob >= 0.0 && positive_prob <= 1.0, ValidationError,
            "positive_prob outside [0, 1]");
  IHD_CHECK(min_lesion_slices >= 2 && min_lesion_slices <= max_lesion_slices &&
                max_lesion_slices + 2 <= min_slices,
            ValidationError, "lesion span range [", min_lesion_slices, ", ",
            max_lesion_slices, "] invalid for scans of ", min_slices,
            " slices");
  double total = 0.0;
  for (double w : subtype_weights) {
    IHD_CHECK(w >= 0.0, ValidationError, "subtype weights must be >= 0");
    total += w;
  }
  IHD_CHECK(total > 0.0, ValidationError, "subtype weights are all zero");
}

bool GeneratedScan::LesionBox(std::size_t slice, BoundingBox &box) const {
  const auto &m = masks.at(slice);
  const std::size_t w = volume.width;
  bool found = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const std::size_t r = i / w, c = i % w;
    if (!found) {
      box = {r, c, r, c};
      found = true;
    } else {
      box.row_min = std::min(box.row_min, r);
      box.row_max = std::max(box.row_max, r);
      box.col_min = std::min(box.col_min, c);
      box.col_max = std::max(box.col_max, c);
    }
  }
  return found;
}

namespace {

struct Lesion {
  std::size_t subtype;  // class index 1..5
  std::size_t first_slice;
  std::size_t span;
  double angle;      // position on the skull / direction from center
  double size;       // overall size factor
  double hu;         // blood level
  double radial;     // blobs: fraction of brain radius from the center
  double aspect;     // blobs: minor/major axis ratio
  double offset_y;   // IVH center offset
  double offset_x;
};

double AngleDiff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

// Rim-type lesion (EPH/SDH/SAH): angular half-width and maximum inward depth
// as functions of the angular offset from the lesion center.
bool InRim(double dist, double ang, double inner_radius, const Lesion &l,
           double s, double k) {
  double half_width = 0.0, depth_max = 0.0;
  const double delta = AngleDiff(ang, l.angle);
  switch (l.subtype) {
    case kEpidural:
      half_width = 0.42 * s;
      break;
    case kSubdural:
      half_width = 0.95 * s;
      break;
    default:  // subarachnoid
      half_width = 0.55 * s;
      break;
  }
  if (std::abs(delta) >= half_width) return false;
  const double u = delta / half_width;
  switch (l.subtype) {
    case kEpidural:  // thick biconvex lens
      depth_max = 7.0 * s * k * std::sqrt(1.0 - u * u);
      break;
    case kSubdural:  // thin, long crescent
      depth_max = (1.2 + 2.4 * s) * k * std::sqrt(1.0 - u * u);
      break;
    default:  // thin rim of constant depth
      depth_max = 1.6 * k;
      break;
  }
  const double depth = inner_radius - dist;
  return depth >= 0.0 && depth <= depth_max;
}

}  // namespace

GeneratedScan GenerateScan(Rng &rng, const PhantomConfig &config,
                           const std::string &scan_id) {
  config.Validate();
  const std::size_t side = config.side;
  const double k = static_cast<double>(side) / 64.0;
  GeneratedScan scan;
  scan.scan_id = scan_id;
  const auto n_slices = static_cast<std::size_t>(rng.UniformInt(
      static_cast<std::int64_t>(config.min_slices),
      static_cast<std::int64_t>(config.max_slices)));
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  const double cy = center + rng.Uniform(-1.5, 1.5) * k;
  const double cx = center + rng.Uniform(-1.5, 1.5) * k;
  const double head_radius = static_cast<double>(side) * rng.Uniform(0.42, 0.45);
  const double skull = config.skull_thickness * k;
  const double brain_hu = rng.Uniform(config.brain_hu_min, config.brain_hu_max);

  std::vector<Lesion> lesions;
  if (rng.Bernoulli(config.positive_prob)) {
    const auto count = static_cast<std::size_t>(rng.UniformInt(1, 2));
    double total = 0.0;
    for (double w : config.subtype_weights) total += w;
    for (std::size_t i = 0; i < count; ++i) {
      Lesion l{};
      double pick = rng.Uniform(0.0, total);
      l.subtype = kNumClasses - 1;
      for (std::size_t t = 0; t < 5; ++t) {
        if (pick < config.subtype_weights[t]) {
          l.subtype = t + 1;
          break;
        }
        pick -= config.subtype_weights[t];
      }
      l.span = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(config.min_lesion_slices),
                         static_cast<std::int64_t>(config.max_lesion_slices)));
      l.first_slice = static_cast<std::size_t>(
          rng.UniformInt(1, static_cast<std::int64_t>(n_slices - l.span - 1)));
      l.angle = rng.Uniform(-std::numbers::pi, std::numbers::pi);
      l.size = rng.Uniform(config.lesion_size_min, config.lesion_size_max);
      l.hu = rng.Uniform(config.lesion_hu_min, config.lesion_hu_max);
      l.radial = rng.Uniform(0.35, 0.6);
      l.aspect = rng.Uniform(0.7, 1.0);
      l.offset_y = rng.Uniform(-2.0, 2.0) * k;
      l.offset_x = rng.Uniform(-2.0, 2.0) * k;
      lesions.push_back(l);
    }
  }

  HuVolume &vol = scan.volume;
  vol.slices = n_slices;
  vol.height = side;
  vol.width = side;
  vol.values.resize(n_slices * side * side);
  scan.labels.assign(n_slices, LabelVector{});
  scan.masks.assign(n_slices, std::vector<std::uint8_t>(side * side, 0));

  const double mid = (static_cast<double>(n_slices) - 1.0) / 2.0;
  for (std::size_t z = 0; z < n_slices; ++z) {
    const double t = (static_cast<double>(z) - mid) / mid;
    const double outer = head_radius * std::sqrt(1.0 - 0.35 * t * t);
    const double inner = outer - skull;
    auto &mask = scan.masks[z];
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double dist = std::hypot(dy, dx);
        double hu = config.air_hu;
        if (dist <= inner) {
          hu = brain_hu;
          const double ang = std::atan2(dy, dx);
          for (const auto &l : lesions) {
            if (z < l.first_slice || z >= l.first_slice + l.span) continue;
            const double phase = (static_cast<double>(z - l.first_slice) + 0.5) /
                                 static_cast<double>(l.span);
            const double s = l.size * (0.6 + 0.4 * std::sin(std::numbers::pi * phase));
            bool inside = false;
            if (l.subtype == kIntraparenchymal || l.subtype == kIntraventricular) {
              double by = 0.0, bx = 0.0, radius = 0.0;
              if (l.subtype == kIntraparenchymal) {
                by = std::sin(l.angle) * l.radial * inner;
                bx = std::cos(l.angle) * l.radial * inner;
                radius = 5.0 * s * k;
              } else {
                by = l.offset_y;
                bx = l.offset_x;
                radius = 4.5 * s * k;
              }
              // Ellipse with its minor axis along the lesion angle.
              const double ry = dy - by, rx = dx - bx;
              const double along = ry * std::sin(l.angle) + rx * std::cos(l.angle);
              const double across = -ry * std::cos(l.angle) + rx * std::sin(l.angle);
              const double minor = radius * l.aspect;
              inside = (along * along) / (minor * minor) +
                           (across * across) / (radius * radius) <= 1.0;
            } else {
              inside = InRim(dist, ang, inner, l, s, k);
            }
            if (inside) {
              hu = l.hu;
              mask[y * side + x] = 1;
              scan.labels[z][l.subtype] = 1;
              scan.labels[z][kAny] = 1;
            }
          }
        } else if (dist <= outer) {
          hu = config.skull_hu;
        }
        if (config.noise_sigma > 0.0) hu += rng.Normal(0.0, config.noise_sigma);
        hu = std::clamp(std::round(hu), -32768.0, 32767.0);
        vol.values[(z * side + y) * side + x] = static_cast<std::int16_t>(hu);
      }
  }
  return scan;
}

SplitCounts ComputeSplitCounts(std::size_t n_scans, const SplitFractions &f) {
  IHD_CHECK(f.train >= 0.0 && f.val >= 0.0 && f.test >= 0.0 &&
                std::abs(f.train + f.val + f.test - 1.0) < 1e-9,
            ValidationError, "split fractions must be non-negative and sum to 1");
  SplitCounts c;
  const double n = static_cast<double>(n_scans);
  c.train = static_cast<std::size_t>(std::llround(n * f.train));
  c.val = std::min(n_scans - c.train,
                   static_cast<std::size_t>(std::llround(n * f.val)));
  c.test = n_scans - c.train - c.val;
  return c;
}

std::string SyntheticScanId(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scan%04zu", index);
  return buf;
}

GeneratedScan RegenerateScan(std::uint64_t seed, const PhantomConfig &config,
                             std::size_t index) {
  Rng rng(DeriveSeed(seed, index));
  return GenerateScan(rng, config, SyntheticScanId(index));
}

DatasetSummary GenerateDataset(std::uint64_t seed, const PhantomConfig &config,
                               std::size_t n_scans,
                               const SplitFractions &fractions,
                               const std::filesystem::path &root) {
  IHD_CHECK(n_scans >= 1, ValidationError, "dataset needs at least one scan");
  config.Validate();
  DatasetSummary summary;
  summary.counts = ComputeSplitCounts(n_scans, fractions);
  for (std::size_t i = 0; i < n_scans; ++i) {
    GeneratedScan scan = RegenerateScan(seed, config, i);
    std::string split = "train";
    if (i >= summary.counts.train + summary.counts.val) split = "test";
    else if (i >= summary.counts.train) split = "val";
    const auto dir = root / split;
    try {
      std::filesystem::create_directories(dir);
      WriteCtv(dir / (scan.scan_id + ".ctv"), scan.volume);
      WriteSidecar(dir / (scan.scan_id + ".json"),
                   LabelSidecar{scan.scan_id, scan.labels, split});
    } catch (const std::filesystem::filesystem_error &e) {
      throw RuntimeError(std::string("writing dataset under ") +
                         dir.string() + ": " + e.what());
    }
    if (split == "train") {
      summary.train_ids.push_back(scan.scan_id);
      bool positive = false;
      for (const auto &l : scan.labels) positive = positive || l[kAny];
      summary.positive_train_scans += positive ? 1 : 0;
    } else if (split == "val") {
      summary.val_ids.push_back(scan.scan_id);
    } else {
      summary.test_ids.push_back(scan.scan_id);
    }
  }
  return summary;
}

}  // namespace ihd
