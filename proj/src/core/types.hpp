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
#ifndef IHD_CORE_TYPES_HPP_
#define IHD_CORE_TYPES_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ihd {

inline constexpr std::size_t kNumClasses = 6;

// Fixed class order used by every label, prediction and weight vector.
enum ClassIndex : std::size_t {
  kAny = 0,
  kEpidural = 1,
  kIntraparenchymal = 2,
  kIntraventricular = 3,
  kSubarachnoid = 4,
  kSubdural = 5,
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "any",          "epidural", "intraparenchymal", "intraventricular",
    "subarachnoid", "subdural"};

using LabelVector = std::array<std::uint8_t, kNumClasses>;
using PredictionVector = std::array<double, kNumClasses>;

// One CT slice in Hounsfield units, row-major.
struct HuSlice {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int16_t> values;

  std::int16_t at(std::size_t y, std::size_t x) const {
    return values[y * width + x];
  }
};

// An ordered stack of equally sized slices; index order is spatial order.
struct HuVolume {
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int16_t> values;  // slice-major, then row-major

  HuSlice Slice(std::size_t index) const;
};

// A multi-channel floating-point image, channel-major then row-major.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), values(c * h * w, fill) {}

  double &at(std::size_t c, std::size_t y, std::size_t x) {
    return values[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
};

}  // namespace ihd

#endif  // IHD_CORE_TYPES_HPP_
