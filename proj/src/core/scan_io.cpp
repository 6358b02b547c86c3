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
#include "scan_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace ihd {

namespace {

class ByteWriter {
 public:
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void I16(std::int16_t v) { U16(static_cast<std::uint16_t>(v)); }
  void F32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    U32(bits);
  }
  void Raw(const std::string &s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> Take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t> &bytes, const char *format)
      : bytes_(bytes), format_(format) {}

  void Need(std::size_t n, const char *what) const {
    IHD_CHECK(pos_ + n <= bytes_.size(), FormatError, format_,
              ": truncated payload reading ", what, " at byte offset ", pos_,
              " (need ", n, " bytes, file has ", bytes_.size(), ")");
  }
  std::uint8_t U8(const char *what) {
    Need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t U16(const char *what) {
    Need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t U32(const char *what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float F32(const char *what) {
    const std::uint32_t bits = U32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string Raw(std::size_t n, const char *what) {
    Need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t> &bytes_;
  const char *format_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  IHD_CHECK(in.good(), ValidationError, "cannot open ", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(const std::filesystem::path &path,
                    const std::vector<std::uint8_t> &bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  IHD_CHECK(out.good(), RuntimeError, "cannot write ", path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  IHD_CHECK(out.good(), RuntimeError, "write failed for ", path.string());
}

std::string ReadTextFile(const std::filesystem::path &path) {
  auto bytes = ReadFileBytes(path);
  return {bytes.begin(), bytes.end()};
}

void WriteTextFile(const std::filesystem::path &path, const std::string &text) {
  WriteFileBytes(path, {text.begin(), text.end()});
}

// ---- CTV ---------------------------------------------------------------------

std::vector<std::uint8_t> EncodeCtv(const HuVolume &volume) {
  IHD_CHECK(volume.slices >= 1 && volume.height >= 1 && volume.width >= 1,
            ValidationError, "CTV volume dims must be >= 1");
  IHD_CHECK(volume.values.size() == volume.slices * volume.height * volume.width,
            ValidationError, "CTV volume holds ", volume.values.size(),
            " values for dims ", volume.slices, "x", volume.height, "x",
            volume.width);
  ByteWriter w;
  w.Raw("CTV1");
  w.U32(static_cast<std::uint32_t>(volume.slices));
  w.U32(static_cast<std::uint32_t>(volume.height));
  w.U32(static_cast<std::uint32_t>(volume.width));
  for (auto v : volume.values) w.I16(v);
  return w.Take();
}

HuVolume DecodeCtv(const std::vector<std::uint8_t> &bytes) {
  ByteReader r(bytes, "CTV");
  const std::string magic = r.Raw(4, "magic");
  IHD_CHECK(magic == "CTV1", FormatError, "CTV: bad magic at byte offset 0");
  HuVolume v;
  v.slices = r.U32("slice count");
  v.height = r.U32("height");
  v.width = r.U32("width");
  IHD_CHECK(v.slices >= 1 && v.height >= 1 && v.width >= 1, FormatError,
            "CTV: zero dimension in header at byte offset 4 (", v.slices, "x",
            v.height, "x", v.width, ")");
  // Each factor is below 2^32, so the plane fits in 64 bits; the full count is
  // bounded by the file size before the last multiply.
  const std::uint64_t plane = static_cast<std::uint64_t>(v.height) * v.width;
  if (plane > bytes.size() / 2 / v.slices)
    throw FormatError(detail::Concat("CTV: truncated payload: header dims ", v.slices, "x",
                                     v.height, "x", v.width, " exceed the ",
                                     bytes.size(), "-byte file"));
  const std::uint64_t count = plane * v.slices;
  const std::uint64_t expected = 16 + 2 * count;
  if (bytes.size() < expected)
    throw FormatError(detail::Concat("CTV: truncated payload: expected ",
                                     expected, " bytes, got ", bytes.size()));
  IHD_CHECK(bytes.size() == expected, FormatError,
            "CTV: size mismatch: expected ", expected, " bytes, got ",
            bytes.size(), " (trailing data from byte offset ", expected, ")");
  v.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i)
    v.values[i] = static_cast<std::int16_t>(r.U16("hu value"));
  return v;
}

void WriteCtv(const std::filesystem::path &path, const HuVolume &volume) {
  WriteFileBytes(path, EncodeCtv(volume));
}

HuVolume ReadCtv(const std::filesystem::path &path) {
  try {
    return DecodeCtv(ReadFileBytes(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- sidecar -------------------------------------------------------------------

std::string FormatSidecar(const LabelSidecar &sidecar) {
  nlohmann::ordered_json j;
  j["scan_id"] = sidecar.scan_id;
  if (sidecar.split) j["split"] = *sidecar.split;
  j["classes"] = std::vector<std::string>(kClassNames.begin(), kClassNames.end());
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto &l : sidecar.labels) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (auto v : l) row.push_back(static_cast<int>(v));
    rows.push_back(row);
  }
  j["labels"] = rows;
  return j.dump(1) + "\n";
}

LabelSidecar ParseSidecar(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("sidecar: invalid JSON: ") + e.what());
  }
  IHD_CHECK(j.is_object() && j.contains("scan_id") && j["scan_id"].is_string(),
            FormatError, "sidecar: missing string field scan_id");
  IHD_CHECK(j.contains("labels") && j["labels"].is_array(), FormatError,
            "sidecar: missing array field labels");
  LabelSidecar s;
  s.scan_id = j["scan_id"].get<std::string>();
  IHD_CHECK(!s.scan_id.empty(), FormatError, "sidecar: empty scan_id");
  if (j.contains("split")) s.split = j["split"].get<std::string>();
  std::size_t index = 0;
  for (const auto &row : j["labels"]) {
    IHD_CHECK(row.is_array() && row.size() == kNumClasses, FormatError,
              "sidecar ", s.scan_id, ": slice ", index, " needs ", kNumClasses,
              " labels");
    LabelVector l{};
    std::uint8_t any_subtype = 0;
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      IHD_CHECK(row[t].is_number_integer() &&
                    (row[t].get<int>() == 0 || row[t].get<int>() == 1),
                FormatError, "sidecar ", s.scan_id, ": slice ", index,
                " label ", t, " must be 0 or 1");
      l[t] = static_cast<std::uint8_t>(row[t].get<int>());
      if (t > 0) any_subtype |= l[t];
    }
    IHD_CHECK(l[kAny] == any_subtype, FormatError, "sidecar ", s.scan_id,
              ": slice ", index, " 'any' label is not the OR of the subtypes");
    s.labels.push_back(l);
    ++index;
  }
  IHD_CHECK(!s.labels.empty(), FormatError, "sidecar ", s.scan_id,
            ": no slices");
  return s;
}

void WriteSidecar(const std::filesystem::path &path, const LabelSidecar &sidecar) {
  WriteTextFile(path, FormatSidecar(sidecar));
}

LabelSidecar ReadSidecar(const std::filesystem::path &path) {
  try {
    return ParseSidecar(ReadTextFile(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- checkpoint ---------------------------------------------------------------

std::vector<std::uint8_t> EncodeCheckpoint(const std::vector<NamedArray> &arrays) {
  std::set<std::string> names;
  ByteWriter w;
  w.Raw("IHDW");
  w.U16(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto &a : arrays) {
    IHD_CHECK(names.insert(a.name).second, ValidationError,
              "checkpoint: duplicate array name '", a.name, "'");
    IHD_CHECK(!a.name.empty() && a.name.size() <= 0xFFFF, ValidationError,
              "checkpoint: invalid array name length ", a.name.size());
    IHD_CHECK(!a.dims.empty() && a.dims.size() <= 0xFF, ValidationError,
              "checkpoint: array '", a.name, "' has unsupported rank ",
              a.dims.size());
    std::uint64_t n = 1;
    for (auto d : a.dims) n *= d;
    IHD_CHECK(n == a.values.size(), ValidationError, "checkpoint: array '",
              a.name, "' dims hold ", n, " values but ", a.values.size(),
              " were given");
    w.U16(static_cast<std::uint16_t>(a.name.size()));
    w.Raw(a.name);
    w.U8(static_cast<std::uint8_t>(a.dims.size()));
    for (auto d : a.dims) w.U32(d);
    for (float v : a.values) w.F32(v);
  }
  return w.Take();
}

std::vector<NamedArray> DecodeCheckpoint(const std::vector<std::uint8_t> &bytes) {
  ByteReader r(bytes, "checkpoint");
  IHD_CHECK(r.Raw(4, "magic") == "IHDW", FormatError,
            "checkpoint: bad magic at byte offset 0");
  const std::uint16_t version = r.U16("version");
  IHD_CHECK(version == kCheckpointVersion, FormatError,
            "checkpoint: unsupported format version ", version,
            " at byte offset 4 (expected ", kCheckpointVersion, ")");
  const std::uint32_t count = r.U32("entry count");
  std::vector<NamedArray> out;
  std::set<std::string> names;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_offset = r.pos();
    const std::uint16_t len = r.U16("name length");
    IHD_CHECK(len > 0 && len <= r.remaining(), FormatError,
              "checkpoint: name-size mismatch at byte offset ", entry_offset,
              " (name length ", len, ", ", r.remaining(), " bytes remain)");
    NamedArray a;
    a.name = r.Raw(len, "name");
    IHD_CHECK(names.insert(a.name).second, FormatError,
              "checkpoint: duplicate array name '", a.name,
              "' at byte offset ", entry_offset);
    const std::uint8_t rank = r.U8("rank");
    IHD_CHECK(rank >= 1, FormatError, "checkpoint: array '", a.name,
              "' has rank 0 at byte offset ", r.pos() - 1);
    // The element count is capped by the bytes left, which also keeps the
    // running product from overflowing on corrupt dims.
    const std::uint64_t cap = r.remaining() / 4;
    std::uint64_t n = 1;
    bool fits = true;
    for (std::uint8_t k = 0; k < rank; ++k) {
      a.dims.push_back(r.U32("dim"));
      const std::uint64_t d = a.dims.back();
      if (d == 0) {
        n = 0;
      } else if (fits && n > cap / d) {
        fits = false;
      } else if (fits) {
        n *= d;
      }
    }
    IHD_CHECK((fits || n == 0) && n * 4 <= r.remaining(), FormatError,
              "checkpoint: truncated payload for array '", a.name,
              "' at byte offset ", r.pos(), ": dims exceed the ", r.remaining(),
              " bytes that remain");
    a.values.resize(n);
    for (auto &v : a.values) v = r.F32("value");
    out.push_back(std::move(a));
  }
  IHD_CHECK(r.remaining() == 0, FormatError,
            "checkpoint: size mismatch: ", r.remaining(),
            " trailing bytes at byte offset ", r.pos());
  return out;
}

void SaveCheckpoint(const std::filesystem::path &path,
                    const std::vector<NamedArray> &arrays) {
  WriteFileBytes(path, EncodeCheckpoint(arrays));
}

std::vector<NamedArray> LoadCheckpoint(const std::filesystem::path &path) {
  try {
    return DecodeCheckpoint(ReadFileBytes(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

NamedArray ToNamedArray(const std::string &name, const Tensor &t) {
  NamedArray a;
  a.name = name;
  for (auto d : t.shape()) a.dims.push_back(static_cast<std::uint32_t>(d));
  a.values.reserve(t.size());
  for (double v : t.data()) a.values.push_back(static_cast<float>(v));
  return a;
}

Tensor ToTensor(const NamedArray &array, bool requires_grad) {
  Shape shape(array.dims.begin(), array.dims.end());
  std::vector<double> data(array.values.begin(), array.values.end());
  return Tensor::FromData(std::move(shape), std::move(data), requires_grad);
}

NamedArray ScalarArray(const std::string &name, std::vector<double> values) {
  NamedArray a;
  a.name = name;
  a.dims = {static_cast<std::uint32_t>(values.size())};
  for (double v : values) a.values.push_back(static_cast<float>(v));
  return a;
}

bool HasArray(const std::vector<NamedArray> &arrays, const std::string &name) {
  return std::any_of(arrays.begin(), arrays.end(),
                     [&](const NamedArray &a) { return a.name == name; });
}

const NamedArray &FindArray(const std::vector<NamedArray> &arrays,
                            const std::string &name) {
  for (const auto &a : arrays)
    if (a.name == name) return a;
  throw FormatError("checkpoint: missing array '" + name + "'");
}

// ---- predictions ---------------------------------------------------------------

std::size_t PredictionTable::slice_count() const {
  std::size_t n = 0;
  for (const auto &[id, rows] : scans) n += rows.size();
  return n;
}

std::string FormatPredictions(const PredictionTable &table) {
  std::string out = "ID,Label\n";
  char buf[64];
  for (const auto &[id, slices] : table.scans)
    for (std::size_t s = 0; s < slices.size(); ++s)
      for (std::size_t t = 0; t < kNumClasses; ++t) {
        const double p = slices[s][t];
        IHD_CHECK(p >= 0.0 && p <= 1.0, ValidationError,
                  "prediction for ", id, " slice ", s, " out of [0, 1]: ", p);
        std::snprintf(buf, sizeof(buf), ",%.6f\n", p);
        out += id;
        out += '_';
        out += std::to_string(s);
        out += '_';
        out += kClassNames[t];
        out += buf;
      }
  return out;
}

PredictionTable ParsePredictions(const std::string &text) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t nl = text.find('\n', start);
      if (nl == std::string::npos) {
        lines.push_back(text.substr(start));
        break;
      }
      lines.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
    // One trailing newline yields one final empty line; tolerate only that.
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
  }
  IHD_CHECK(!lines.empty() && lines[0] == "ID,Label", FormatError,
            "predictions: line 1: expected header 'ID,Label'");
  std::map<std::string, std::map<std::size_t, std::array<std::optional<double>, kNumClasses>>>
      cells;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string &line = lines[ln];
    const std::size_t lineno = ln + 1;
    const std::size_t comma = line.find(',');
    IHD_CHECK(comma != std::string::npos && line.find(',', comma + 1) == std::string::npos,
              FormatError, "predictions: line ", lineno,
              ": expected exactly two fields");
    const std::string id = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    const std::size_t u2 = id.rfind('_');
    const std::size_t u1 = u2 == std::string::npos || u2 == 0 ? std::string::npos
                                                              : id.rfind('_', u2 - 1);
    IHD_CHECK(u1 != std::string::npos && u1 > 0, FormatError,
              "predictions: line ", lineno, ": malformed ID '", id, "'");
    const std::string scan = id.substr(0, u1);
    const std::string slice_str = id.substr(u1 + 1, u2 - u1 - 1);
    const std::string cls = id.substr(u2 + 1);
    IHD_CHECK(!slice_str.empty() &&
                  std::all_of(slice_str.begin(), slice_str.end(),
                              [](char c) { return c >= '0' && c <= '9'; }),
              FormatError, "predictions: line ", lineno,
              ": malformed slice index in ID '", id, "'");
    const auto it = std::find(kClassNames.begin(), kClassNames.end(), cls);
    IHD_CHECK(it != kClassNames.end(), FormatError, "predictions: line ",
              lineno, ": unknown class '", cls, "' in ID '", id, "'");
    double p = 0.0;
    std::size_t consumed = 0;
    try {
      p = std::stod(value, &consumed);
    } catch (const std::exception &) {
      consumed = 0;
    }
    IHD_CHECK(consumed == value.size() && !value.empty() && std::isfinite(p),
              FormatError, "predictions: line ", lineno,
              ": malformed probability '", value, "'");
    IHD_CHECK(p >= 0.0 && p <= 1.0, FormatError, "predictions: line ", lineno,
              ": probability ", value, " out of range [0, 1]");
    auto &cell = cells[scan][std::stoul(slice_str)]
                      [static_cast<std::size_t>(it - kClassNames.begin())];
    IHD_CHECK(!cell.has_value(), FormatError, "predictions: line ", lineno,
              ": duplicate ID '", id, "'");
    cell = p;
  }
  PredictionTable table;
  for (const auto &[scan, slices] : cells) {
    auto &rows = table.scans[scan];
    std::size_t expect = 0;
    for (const auto &[index, classes] : slices) {
      IHD_CHECK(index == expect, FormatError, "predictions: scan ", scan,
                " is missing slice ", expect);
      PredictionVector v{};
      for (std::size_t t = 0; t < kNumClasses; ++t) {
        IHD_CHECK(classes[t].has_value(), FormatError, "predictions: scan ",
                  scan, " slice ", index, " is missing class ", kClassNames[t]);
        v[t] = *classes[t];
      }
      rows.push_back(v);
      ++expect;
    }
  }
  return table;
}

void WritePredictions(const std::filesystem::path &path,
                      const PredictionTable &table) {
  WriteTextFile(path, FormatPredictions(table));
}

PredictionTable ReadPredictions(const std::filesystem::path &path) {
  try {
    return ParsePredictions(ReadTextFile(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ihd
