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
#ifndef IHD_CORE_SCAN_IO_HPP_
#define IHD_CORE_SCAN_IO_HPP_

// On-disk formats. All binary fields are little-endian. See docs/formats.md.
//
//   CTV1 volume   "CTV1" u32 N u32 H u32 W, then N*H*W int16 HU values
//   label sidecar JSON {"scan_id", "labels": [[6 x 0/1] per slice], "split"?}
//   checkpoint    "IHDW" u16 version u32 count, then per entry
//                 u16 name_len, name, u8 rank, rank x u32 dims, float32 data
//   predictions   CSV "ID,Label", ID = <scan>_<slice>_<class>, 6 decimals

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "types.hpp"

namespace ihd {

inline constexpr std::uint16_t kCheckpointVersion = 1;

void WriteCtv(const std::filesystem::path &path, const HuVolume &volume);
HuVolume ReadCtv(const std::filesystem::path &path);
std::vector<std::uint8_t> EncodeCtv(const HuVolume &volume);
HuVolume DecodeCtv(const std::vector<std::uint8_t> &bytes);

struct LabelSidecar {
  std::string scan_id;
  std::vector<LabelVector> labels;  // one per slice
  std::optional<std::string> split;
};

void WriteSidecar(const std::filesystem::path &path, const LabelSidecar &sidecar);
LabelSidecar ReadSidecar(const std::filesystem::path &path);
LabelSidecar ParseSidecar(const std::string &text);
std::string FormatSidecar(const LabelSidecar &sidecar);

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

std::vector<std::uint8_t> EncodeCheckpoint(const std::vector<NamedArray> &arrays);
std::vector<NamedArray> DecodeCheckpoint(const std::vector<std::uint8_t> &bytes);
void SaveCheckpoint(const std::filesystem::path &path,
                    const std::vector<NamedArray> &arrays);
std::vector<NamedArray> LoadCheckpoint(const std::filesystem::path &path);

// Conversions between tensors and stored arrays (float64 <-> float32).
NamedArray ToNamedArray(const std::string &name, const Tensor &t);
Tensor ToTensor(const NamedArray &array, bool requires_grad = false);
NamedArray ScalarArray(const std::string &name, std::vector<double> values);
// Looks up `name`; throws a FormatError naming the missing entry.
const NamedArray &FindArray(const std::vector<NamedArray> &arrays,
                            const std::string &name);
bool HasArray(const std::vector<NamedArray> &arrays, const std::string &name);

// Per-scan, per-slice probability vectors; rows are ordered by scan id, slice
// index, then fixed class order.
struct PredictionTable {
  std::map<std::string, std::vector<PredictionVector>> scans;

  std::size_t slice_count() const;
  bool operator==(const PredictionTable &) const = default;
};

std::string FormatPredictions(const PredictionTable &table);
PredictionTable ParsePredictions(const std::string &text);
void WritePredictions(const std::filesystem::path &path,
                      const PredictionTable &table);
PredictionTable ReadPredictions(const std::filesystem::path &path);

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path &path);
void WriteFileBytes(const std::filesystem::path &path,
                    const std::vector<std::uint8_t> &bytes);
std::string ReadTextFile(const std::filesystem::path &path);
void WriteTextFile(const std::filesystem::path &path, const std::string &text);

}  // namespace ihd

#endif  // IHD_CORE_SCAN_IO_HPP_
