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
#include "preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "error.hpp"

namespace ihd {

HuSlice HuVolume::Slice(std::size_t index) const {
  IHD_CHECK(index < slices, ValidationError, "slice index ", index,
            " out of range for volume with ", slices, " slices");
  HuSlice s;
  s.height = height;
  s.width = width;
  const std::size_t plane = height * width;
  s.values.assign(values.begin() + static_cast<std::ptrdiff_t>(index * plane),
                  values.begin() + static_cast<std::ptrdiff_t>((index + 1) * plane));
  return s;
}

void AugmentationConfig::Validate() const {
  for (double p : {flip_prob, rotate_prob, shift_prob, scale_prob,
                   brightness_prob})
    IHD_CHECK(p >= 0.0 && p <= 1.0, ValidationError,
              "augmentation probability ", p, " outside [0, 1]");
  IHD_CHECK(rotate_degrees >= 0.0 && shift_fraction >= 0.0 &&
                scale_delta >= 0.0 && scale_delta < 1.0 &&
                brightness_delta >= 0.0,
            ValidationError, "augmentation ranges must be non-negative "
                             "magnitudes (scale_delta < 1)");
}

double ApplyWindow(double hu, const WindowSpec &window) {
  const double lower = window.center - window.width / 2.0;
  const double v = (hu - lower) / window.width;
  return std::clamp(v, 0.0, 1.0);
}

Image ApplyWindow(const HuSlice &slice, const WindowSpec &window) {
  IHD_CHECK(window.width > 0.0, ValidationError, "window width must be > 0");
  Image out(1, slice.height, slice.width);
  for (std::size_t i = 0; i < slice.values.size(); ++i)
    out.values[i] = ApplyWindow(static_cast<double>(slice.values[i]), window);
  return out;
}

Image ComposeWindows(const HuSlice &slice) {
  Image out(3, slice.height, slice.width);
  const std::size_t plane = slice.height * slice.width;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out.values[c * plane + i] =
          ApplyWindow(static_cast<double>(slice.values[i]), kInputWindows[c]);
  return out;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;  // weight of hi
};

// Half-pixel-center source coordinate for each output index.
std::vector<Tap> ResizeTaps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

// Bilinear sample with zero outside the image.
double SampleZeroFill(const Image &img, std::size_t c, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double wy = y - fy, wx = x - fx;
  const auto y0 = static_cast<long long>(fy), x0 = static_cast<long long>(fx);
  const auto h = static_cast<long long>(img.height),
             w = static_cast<long long>(img.width);
  auto px = [&](long long yy, long long xx) {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  return (1.0 - wy) * ((1.0 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
         wy * ((1.0 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

}  // namespace

Image ResizeBilinear(const Image &image, std::size_t target) {
  IHD_CHECK(target >= 8, ValidationError, "resize target ", target,
            " below minimum side 8");
  if (image.height == target && image.width == target) return image;
  const auto ty = ResizeTaps(image.height, target);
  const auto tx = ResizeTaps(image.width, target);
  Image out(image.channels, target, target);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < target; ++y) {
      const Tap &a = ty[y];
      for (std::size_t x = 0; x < target; ++x) {
        const Tap &b = tx[x];
        const double top = (1.0 - b.frac) * image.at(c, a.lo, b.lo) +
                           b.frac * image.at(c, a.lo, b.hi);
        const double bottom = (1.0 - b.frac) * image.at(c, a.hi, b.lo) +
                              b.frac * image.at(c, a.hi, b.hi);
        out.at(c, y, x) = (1.0 - a.frac) * top + a.frac * bottom;
      }
    }
  return out;
}

Image Normalize(const Image &image, const NormalizationStats &stats) {
  IHD_CHECK(image.channels == 3, ValidationError,
            "normalize expects 3 channels, got ", image.channels);
  for (double s : stats.stddev)
    IHD_CHECK(s > 0.0, ValidationError,
              "normalization std must be > 0, got ", s);
  Image out = image;
  const std::size_t plane = image.height * image.width;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out.values[c * plane + i] =
          (image.values[c * plane + i] - stats.mean[c]) / stats.stddev[c];
  return out;
}

AugmentParams SampleAugmentation(const AugmentationConfig &config,
                                 std::size_t height, std::size_t width,
                                 Rng &rng) {
  config.Validate();
  AugmentParams p;
  // Fixed draw order keeps augmentation reproducible per seed.
  p.flip = rng.Bernoulli(config.flip_prob);
  if (rng.Bernoulli(config.rotate_prob))
    p.rotate_degrees = rng.Uniform(-config.rotate_degrees, config.rotate_degrees);
  if (rng.Bernoulli(config.shift_prob)) {
    const double f = config.shift_fraction;
    p.shift_y = rng.Uniform(-f, f) * static_cast<double>(height);
    p.shift_x = rng.Uniform(-f, f) * static_cast<double>(width);
  }
  if (rng.Bernoulli(config.scale_prob))
    p.scale = rng.Uniform(1.0 - config.scale_delta, 1.0 + config.scale_delta);
  if (rng.Bernoulli(config.brightness_prob))
    p.brightness =
        rng.Uniform(-config.brightness_delta, config.brightness_delta);
  return p;
}

Image ApplyAugmentation(const Image &image, const AugmentParams &params) {
  Image out = image;
  if (params.flip) {
    for (std::size_t c = 0; c < out.channels; ++c)
      for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x)
          out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  }
  if (params.geometric()) {
    const Image src = out;
    const double cy = (static_cast<double>(src.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(src.width) - 1.0) / 2.0;
    const double theta = params.rotate_degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    // Inverse map: destination -> source.
    for (std::size_t y = 0; y < src.height; ++y)
      for (std::size_t x = 0; x < src.width; ++x) {
        const double dy = static_cast<double>(y) - cy - params.shift_y;
        const double dx = static_cast<double>(x) - cx - params.shift_x;
        const double sy = (cs * dy - sn * dx) / params.scale + cy;
        const double sx = (sn * dy + cs * dx) / params.scale + cx;
        for (std::size_t c = 0; c < src.channels; ++c)
          out.at(c, y, x) = SampleZeroFill(src, c, sy, sx);
      }
  }
  if (params.brightness != 0.0)
    for (double &v : out.values) v += params.brightness;
  return out;
}

Image Augment(const Image &image, const AugmentationConfig &config, Rng &rng) {
  return ApplyAugmentation(
      image, SampleAugmentation(config, image.height, image.width, rng));
}

Image PrepareModelInput(const HuSlice &slice, std::size_t side,
                        const NormalizationStats &stats,
                        const AugmentationConfig *augmentation, Rng *rng) {
  Image img = ResizeBilinear(ComposeWindows(slice), side);
  if (augmentation && rng) img = Augment(img, *augmentation, *rng);
  return Normalize(img, stats);
}

}  // namespace ihd
