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
#include <filesystem>

#include "doctest.h"
#include "error.hpp"
#include "scan_io.hpp"

using namespace ihd;
namespace fs = std::filesystem;

namespace {

fs::path TempDir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("ihd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

HuVolume RandomVolume(std::uint64_t seed, std::size_t n, std::size_t h, std::size_t w) {
  Rng rng(seed);
  HuVolume v{n, h, w, std::vector<std::int16_t>(n * h * w)};
  for (auto &x : v.values) x = static_cast<std::int16_t>(rng.UniformInt(-32768, 32767));
  return v;
}

}  // namespace

TEST_CASE("CTV round trip and layout") {
  const HuVolume v = RandomVolume(1, 3, 5, 7);
  const auto bytes = EncodeCtv(v);
  CHECK(bytes.size() == 16 + 2 * 3 * 5 * 7);
  const HuVolume back = DecodeCtv(bytes);
  CHECK(back.slices == 3);
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK(back.values == v.values);

  SUBCASE("a 1x1x1 volume of -1000 HU is 18 bytes, little-endian") {
    const auto b = EncodeCtv(HuVolume{1, 1, 1, {-1000}});
    REQUIRE(b.size() == 18);
    CHECK(std::string(b.begin(), b.begin() + 4) == "CTV1");
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[16] == 0x18);  // -1000 = 0xFC18
    CHECK(b[17] == 0xFC);
  }
  SUBCASE("a truncated payload names expected and actual sizes") {
    auto b = bytes;
    b.pop_back();
    try {
      DecodeCtv(b);
      FAIL("expected FormatError");
    } catch (const FormatError &e) {
      const std::string what = e.what();
      CHECK(what.find("truncated payload") != std::string::npos);
      CHECK(what.find(std::to_string(bytes.size())) != std::string::npos);
      CHECK(what.find(std::to_string(b.size())) != std::string::npos);
    }
  }
  SUBCASE("bad magic and trailing bytes are rejected") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(DecodeCtv(b), FormatError);
    auto c = bytes;
    c.push_back(0);
    CHECK_THROWS_AS(DecodeCtv(c), FormatError);
  }
  SUBCASE("header dims whose product wraps 64 bits are rejected") {
    // 2^31 cubed is 2^93, which is zero modulo 2^64.
    std::vector<std::uint8_t> b = {'C', 'T', 'V', '1'};
    for (int k = 0; k < 3; ++k) b.insert(b.end(), {0, 0, 0, 0x80});
    CHECK_THROWS_AS(DecodeCtv(b), FormatError);
  }
  SUBCASE("file round trip") {
    const fs::path dir = TempDir("ctv");
    WriteCtv(dir / "a.ctv", v);
    CHECK(ReadCtv(dir / "a.ctv").values == v.values);
    CHECK_THROWS_AS(ReadCtv(dir / "missing.ctv"), ValidationError);
  }
}

TEST_CASE("label sidecar") {
  LabelSidecar s{"scan0007", {{0, 0, 0, 0, 0, 0}, {1, 0, 1, 0, 0, 0}}, "train"};
  const LabelSidecar back = ParseSidecar(FormatSidecar(s));
  CHECK(back.scan_id == "scan0007");
  CHECK(back.labels == s.labels);
  CHECK(back.split == s.split);

  s.split.reset();
  CHECK_FALSE(ParseSidecar(FormatSidecar(s)).split.has_value());

  CHECK_THROWS_AS(ParseSidecar(R"({"scan_id":"a","labels":[[1,0,0,0,0,0]]})"), FormatError);
  CHECK_THROWS_AS(ParseSidecar(R"({"scan_id":"a","labels":[[0,1,0,0,0,0]]})"), FormatError);
  CHECK_THROWS_AS(ParseSidecar(R"({"scan_id":"a","labels":[[0,0,0,0,0]]})"), FormatError);
  CHECK_THROWS_AS(ParseSidecar(R"({"scan_id":"a","labels":[[0,0,0,0,0,2]]})"), FormatError);
  CHECK_THROWS_AS(ParseSidecar(R"({"labels":[]})"), FormatError);
  CHECK_THROWS_AS(ParseSidecar("not json"), FormatError);
}

TEST_CASE("checkpoint container") {
  SUBCASE("empty container is 10 bytes") {
    const auto b = EncodeCheckpoint({});
    CHECK(b.size() == 10);
    CHECK(std::string(b.begin(), b.begin() + 4) == "IHDW");
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(DecodeCheckpoint(b).empty());
  }
  SUBCASE("rank-3 round trip") {
    NamedArray a{"w", {2, 3, 4}, {}};
    for (int i = 0; i < 24; ++i) a.values.push_back(static_cast<float>(i) * 0.37f - 2.0f);
    NamedArray b{"bias", {3}, {1.5f, -0.25f, 3e-8f}};
    const auto back = DecodeCheckpoint(EncodeCheckpoint({a, b}));
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "w");
    CHECK(back[0].dims == a.dims);
    CHECK(back[0].values == a.values);
    CHECK(back[1].values == b.values);
    // Header 10 + entry (2 + 1 + 1 + 12 + 96) + entry (2 + 4 + 1 + 4 + 12)
    CHECK(EncodeCheckpoint({a, b}).size() == 10 + 112 + 23);
  }
  SUBCASE("errors") {
    NamedArray a{"x", {1}, {1.0f}};
    CHECK_THROWS_AS(EncodeCheckpoint({a, a}), ValidationError);
    CHECK_THROWS_AS(EncodeCheckpoint({NamedArray{"y", {2}, {1.0f}}}), ValidationError);
    auto bytes = EncodeCheckpoint({a});
    auto bad = bytes;
    bad[0] ^= 0x01;
    CHECK_THROWS_AS(DecodeCheckpoint(bad), FormatError);
    bad = bytes;
    bad[4] = 2;  // future version
    CHECK_THROWS_AS(DecodeCheckpoint(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(DecodeCheckpoint(bad), FormatError);
    CHECK_THROWS_AS(FindArray(DecodeCheckpoint(bytes), "missing"), FormatError);
  }
  SUBCASE("dims whose product wraps 64 bits are rejected") {
    // Rank 2 with dims 2^31 x 2^31: 4 * 2^62 wraps to zero bytes.
    auto b = EncodeCheckpoint({NamedArray{"x", {1}, {1.0f}}});
    b.resize(13);
    const std::vector<std::uint8_t> tail = {2, 0, 0, 0, 0x80, 0, 0, 0, 0x80};
    b.insert(b.end(), tail.begin(), tail.end());
    CHECK_THROWS_AS(DecodeCheckpoint(b), FormatError);
  }
  SUBCASE("tensor conversions round to float32") {
    Tensor t = Tensor::FromData({2}, {0.1, 1e10});
    const Tensor back = ToTensor(ToNamedArray("t", t));
    CHECK(back.at(0) == static_cast<double>(0.1f));
    CHECK(back.shape() == Shape{2});
  }
}

TEST_CASE("prediction table") {
  SUBCASE("one slice at 0.5 gives six rows ending in ,0.500000") {
    PredictionTable t;
    t.scans["s1"] = {PredictionVector{0.5, 0.5, 0.5, 0.5, 0.5, 0.5}};
    const std::string text = FormatPredictions(t);
    CHECK(text ==
          "ID,Label\n"
          "s1_0_any,0.500000\n"
          "s1_0_epidural,0.500000\n"
          "s1_0_intraparenchymal,0.500000\n"
          "s1_0_intraventricular,0.500000\n"
          "s1_0_subarachnoid,0.500000\n"
          "s1_0_subdural,0.500000\n");
  }
  SUBCASE("round trip of a random table") {
    Rng rng(3);
    PredictionTable t;
    for (const char *id : {"scan_a", "b", "scan0003"}) {
      auto &rows = t.scans[id];
      for (int s = 0; s < 12; ++s) {
        PredictionVector p{};
        for (auto &v : p) v = std::round(rng.Uniform(0.0, 1.0) * 1e6) / 1e6;
        rows.push_back(p);
      }
    }
    CHECK(ParsePredictions(FormatPredictions(t)) == t);
    CHECK(ParsePredictions(FormatPredictions(t)).slice_count() == 36);
  }
  SUBCASE("out-of-range probability names the line") {
    const std::string text =
        "ID,Label\ns1_0_any,0.1\ns1_0_epidural,1.200000\n";
    try {
      ParsePredictions(text);
      FAIL("expected FormatError");
    } catch (const FormatError &e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("malformed rows are rejected") {
    CHECK_THROWS_AS(ParsePredictions("ID,Label\nbad,0.1\n"), FormatError);
    CHECK_THROWS_AS(ParsePredictions("ID,Label\ns1_0_bogus,0.1\n"), FormatError);
    CHECK_THROWS_AS(ParsePredictions("id,label\n"), FormatError);
    CHECK_THROWS_AS(ParsePredictions("ID,Label\ns1_0_any,0.1\n\n"), FormatError);
    // A slice with missing classes.
    CHECK_THROWS_AS(ParsePredictions("ID,Label\ns1_0_any,0.1\n"), FormatError);
  }
}
