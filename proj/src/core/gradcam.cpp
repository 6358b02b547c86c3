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
#include "gradcam.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "preprocessing.hpp"
#include "scan_io.hpp"

namespace ihd {

Heatmap GradCam(const EncoderModel &model, const Image &image,
                std::size_t target_class) {
  IHD_CHECK(target_class < kNumClasses, ValidationError,
            "Grad-CAM class index ", target_class, " out of range [0, ",
            kNumClasses, ")");
  const Image batch[] = {image};
  Tensor input = StackImages(batch);
  Tensor features;
  {
    NoGradGuard ng;
    Tape unused;
    features = ForwardTrunk(unused, model, input);
  }
  Tensor acts = features.Detach(true);
  Tape tape;
  Tensor logits = ForwardHead(tape, model, acts);
  Tensor target = Sum(tape, Slice(tape, logits, 1, target_class, target_class + 1));
  const Tensor wrt[] = {acts};
  Gradients g = Backward(tape, target, wrt);
  Tensor grads = Tensor::FromData(acts.shape(), std::move(g[0]));
  return CamFromActivations(acts, grads, model.config.input_side, target_class);
}

Heatmap CamFromActivations(const Tensor &activations, const Tensor &gradients,
                           std::size_t side, std::size_t target_class) {
  IHD_CHECK(activations.rank() == 4 && activations.dim(0) == 1 &&
                activations.shape() == gradients.shape(),
            ShapeError, "Grad-CAM: activations ",
            ShapeToString(activations.shape()), " and gradients ",
            ShapeToString(gradients.shape()), " must both be [1, C, h, w]");
  IHD_CHECK(activations.dim(2) == activations.dim(3), ShapeError,
            "Grad-CAM: activation maps must be square");
  const std::size_t c = activations.dim(1), h = activations.dim(2),
                    w = activations.dim(3), plane = h * w;
  auto a = activations.data();
  auto g = gradients.data();
  Image cam(1, h, w);
  for (std::size_t k = 0; k < c; ++k) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += g[k * plane + i];
    alpha /= static_cast<double>(plane);
    if (alpha == 0.0) continue;
    for (std::size_t i = 0; i < plane; ++i) cam.values[i] += alpha * a[k * plane + i];
  }
  bool any = false;
  for (auto &v : cam.values) {
    v = std::max(v, 0.0);
    any = any || v > 0.0;
  }
  Heatmap out;
  out.height = out.width = side;
  out.target_class = target_class;
  out.values.assign(side * side, 0.0);
  if (!any) return out;
  Image up = h == side ? cam : ResizeBilinear(cam, side);
  const double peak = *std::max_element(up.values.begin(), up.values.end());
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = std::clamp(up.values[i] / peak, 0.0, 1.0);
  out.empty = false;
  return out;
}

Heatmap CombineMax(std::span<const Heatmap> maps, std::size_t target_class) {
  IHD_CHECK(!maps.empty(), ValidationError, "no heatmaps to combine");
  Heatmap out;
  out.height = maps.front().height;
  out.width = maps.front().width;
  out.target_class = target_class;
  out.values.assign(out.height * out.width, 0.0);
  for (const auto &m : maps) {
    IHD_CHECK(m.height == out.height && m.width == out.width, ShapeError,
              "heatmaps to combine differ in size");
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = std::max(out.values[i], m.values[i]);
    out.empty = out.empty && m.empty;
  }
  return out;
}

std::pair<double, double> CenterOfMass(const Heatmap &map) {
  double total = 0.0, ry = 0.0, rx = 0.0;
  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x) {
      const double v = map.at(y, x);
      total += v;
      ry += v * static_cast<double>(y);
      rx += v * static_cast<double>(x);
    }
  IHD_CHECK(total > 0.0, ValidationError,
            "center of mass is undefined for an all-zero heatmap");
  return {ry / total, rx / total};
}

std::array<double, 3> HeatColor(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return {v, 0.0, 1.0 - v};
}

RgbImage Overlay(const Heatmap &map, const HuSlice &slice) {
  IHD_CHECK(map.height == slice.height && map.width == slice.width, ShapeError,
            "overlay: heatmap ", map.height, "x", map.width, " vs slice ",
            slice.height, "x", slice.width);
  RgbImage out;
  out.height = map.height;
  out.width = map.width;
  out.pixels.resize(out.height * out.width * 3);
  const Image base = ApplyWindow(slice, kBrainWindow);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const auto color = HeatColor(map.values[i]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double v =
          (1.0 - kOverlayAlpha) * base.values[i] + kOverlayAlpha * color[ch];
      out.pixels[i * 3 + ch] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return out;
}

namespace {

void PutU32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void PutChunk(std::vector<std::uint8_t> &out, const char *type,
              const std::vector<std::uint8_t> &data) {
  PutU32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  PutU32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> EncodePng(const RgbImage &image) {
  IHD_CHECK(image.height > 0 && image.width > 0 &&
                image.pixels.size() == image.height * image.width * 3,
            ValidationError, "PNG: malformed RGB image");
  std::vector<std::uint8_t> raw;
  raw.reserve(image.height * (image.width * 3 + 1));
  for (std::size_t y = 0; y < image.height; ++y) {
    raw.push_back(0);  // filter: none
    const auto *row = &image.pixels[y * image.width * 3];
    raw.insert(raw.end(), row, row + image.width * 3);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  IHD_CHECK(compress2(packed.data(), &packed_size, raw.data(),
                      static_cast<uLong>(raw.size()), 9) == Z_OK,
            RuntimeError, "PNG: zlib compression failed");
  packed.resize(packed_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  PutU32(ihdr, static_cast<std::uint32_t>(image.width));
  PutU32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
  PutChunk(out, "IHDR", ihdr);
  PutChunk(out, "IDAT", packed);
  PutChunk(out, "IEND", {});
  return out;
}

void WritePng(const std::filesystem::path &path, const RgbImage &image) {
  WriteFileBytes(path, EncodePng(image));
}

}  // namespace ihd
