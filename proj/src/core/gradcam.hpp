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
#ifndef IHD_CORE_GRADCAM_HPP_
#define IHD_CORE_GRADCAM_HPP_

// Grad-CAM on the last residual stage of the slice encoder, plus PNG overlays.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "slice_encoder.hpp"
#include "types.hpp"

namespace ihd {

struct Heatmap {
  std::size_t height = 0, width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  std::size_t target_class = 0;
  bool empty = true;  // the map before normalization was identically zero

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// `image` is a normalized model input; `target_class` indexes kClassNames.
Heatmap GradCam(const EncoderModel &model, const Image &image,
                std::size_t target_class);

// The weighting step on its own. `activations` and `gradients` are
// [1, C, h, w]; the result is upsampled to `side` x `side`.
Heatmap CamFromActivations(const Tensor &activations, const Tensor &gradients,
                           std::size_t side, std::size_t target_class);

// Pixelwise max over subtype maps; empty only if every input is empty.
Heatmap CombineMax(std::span<const Heatmap> maps, std::size_t target_class);

// Intensity-weighted mean (row, col). Throws on an all-zero map.
std::pair<double, double> CenterOfMass(const Heatmap &map);

struct RgbImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

inline constexpr double kOverlayAlpha = 0.4;

// Colormap from blue (0) to red (1).
std::array<double, 3> HeatColor(double v);

// Brain-window grayscale of `slice` blended with the heatmap colors.
RgbImage Overlay(const Heatmap &map, const HuSlice &slice);

std::vector<std::uint8_t> EncodePng(const RgbImage &image);
void WritePng(const std::filesystem::path &path, const RgbImage &image);

}  // namespace ihd

#endif  // IHD_CORE_GRADCAM_HPP_
