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
#ifndef IHD_CORE_PREPROCESSING_HPP_
#define IHD_CORE_PREPROCESSING_HPP_

#include <array>
#include <cstdint>

#include "rng.hpp"
#include "types.hpp"

namespace ihd {

// Linear HU -> [0, 1] display window given by center and width.
struct WindowSpec {
  double center = 0.0;
  double width = 1.0;
};

inline constexpr WindowSpec kBrainWindow{40.0, 80.0};
inline constexpr WindowSpec kSubduralWindow{80.0, 200.0};
inline constexpr WindowSpec kSoftTissueWindow{40.0, 380.0};
// Channel order of every model input.
inline constexpr std::array<WindowSpec, 3> kInputWindows = {
    kBrainWindow, kSubduralWindow, kSoftTissueWindow};

struct NormalizationStats {
  std::array<double, 3> mean = {0.1738, 0.1433, 0.1970};
  std::array<double, 3> stddev = {0.3161, 0.2850, 0.3111};
};

struct AugmentationConfig {
  double flip_prob = 0.5;
  double rotate_prob = 0.5;
  double rotate_degrees = 15.0;  // uniform in [-d, d]
  double shift_prob = 0.5;
  double shift_fraction = 0.1;  // per axis, fraction of side, in [-f, f]
  double scale_prob = 0.5;
  double scale_delta = 0.1;  // factor in [1 - d, 1 + d]
  double brightness_prob = 0.5;
  double brightness_delta = 0.1;  // additive, in [-d, d]

  static AugmentationConfig Identity() {
    return {0.0, 0.0, 15.0, 0.0, 0.1, 0.0, 0.1, 0.0, 0.1};
  }
  void Validate() const;
};

// One concrete draw of augmentation parameters.
struct AugmentParams {
  bool flip = false;
  double rotate_degrees = 0.0;
  double shift_y = 0.0;  // pixels
  double shift_x = 0.0;
  double scale = 1.0;
  double brightness = 0.0;

  bool geometric() const {
    return rotate_degrees != 0.0 || shift_y != 0.0 || shift_x != 0.0 ||
           scale != 1.0;
  }
};

double ApplyWindow(double hu, const WindowSpec &window);
// Single-channel [0, 1] image of the slice under one window.
Image ApplyWindow(const HuSlice &slice, const WindowSpec &window);
// Three-channel (brain, subdural, soft tissue) image.
Image ComposeWindows(const HuSlice &slice);

// Bilinear resize to target x target with half-pixel centers
// (align_corners = false). Same-size input is returned unchanged.
Image ResizeBilinear(const Image &image, std::size_t target);

Image Normalize(const Image &image, const NormalizationStats &stats);

AugmentParams SampleAugmentation(const AugmentationConfig &config,
                                 std::size_t height, std::size_t width,
                                 Rng &rng);
// Flip, then one affine resample (rotation/shift/scale about the image
// center, zero fill), then additive brightness.
Image ApplyAugmentation(const Image &image, const AugmentParams &params);
Image Augment(const Image &image, const AugmentationConfig &config, Rng &rng);

// Full model-input path for one slice: windows, resize, optional
// augmentation, normalization.
Image PrepareModelInput(const HuSlice &slice, std::size_t side,
                        const NormalizationStats &stats,
                        const AugmentationConfig *augmentation = nullptr,
                        Rng *rng = nullptr);

}  // namespace ihd

#endif  // IHD_CORE_PREPROCESSING_HPP_
