// Copyright 2026 The ag4 Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstring>
#include <filesystem>

#include "ag4/binary_io.h"
#include "ag4/rng.h"
#include "ag4/vision_bridge.h"
#include "doctest.h"
#include "oracles.h"

using namespace ag4;

namespace {

SyntheticImage blank() { return SyntheticImage{16, 16, std::vector<double>(256, 0.0), 0, 0}; }

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("stub shapes and frozen flags") {
  const VisionConfig c;
  const auto stub = init_vision_stub(c, 1);
  CHECK(stub.patch_embed.shape() == Shape{16, 8});
  CHECK(stub.patch_bias.shape() == Shape{8});
  CHECK(stub.queries.shape() == Shape{4, 8});
  CHECK_FALSE(stub.patch_embed.requires_grad());
  CHECK_FALSE(stub.queries.requires_grad());
  const auto proj = init_projection(c, 16, 2);
  CHECK(proj.weight.shape() == Shape{8, 16});
  CHECK(proj.bias.shape() == Shape{16});
}

TEST_CASE("zero image and zero bias give zero features") {
  const VisionConfig c;
  const auto stub = init_vision_stub(c, 1);
  const auto f = encode_image(blank(), stub, c);
  CHECK(f.shape() == Shape{16, 8});
  for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("encoding is deterministic") {
  const VisionConfig c;
  Rng rng(4);
  auto img = blank();
  for (auto& p : img.pixels) p = rng.uniform();
  const auto a = encode_image(img, init_vision_stub(c, 9), c);
  const auto b = encode_image(img, init_vision_stub(c, 9), c);
  CHECK(same_bits(a, b));
}

TEST_CASE("one-hot pixel reads one stub weight row") {
  const VisionConfig c;
  const auto stub = init_vision_stub(c, 3);
  for (std::size_t y : {0u, 5u, 15u}) {
    for (std::size_t x : {0u, 6u, 13u}) {
      auto img = blank();
      img.pixels[y * 16 + x] = 1.0;
      const auto f = encode_image(img, stub, c);
      const std::size_t patch = (y / 4) * 4 + x / 4;
      const std::size_t within = (y % 4) * 4 + x % 4;
      for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t j = 0; j < 8; ++j)
          CHECK(f.at(r, j) == (r == patch ? stub.patch_embed.at(within, j) : 0.0));
    }
  }
}

TEST_CASE("identical features are returned unchanged by every query") {
  const VisionConfig c;
  const auto stub = init_vision_stub(c, 5);
  std::vector<double> rows;
  const double row[] = {0.1, -0.3, 0.7, 0.0, 2.0, -1.0, 0.5, 0.25};
  for (int p = 0; p < 16; ++p) rows.insert(rows.end(), row, row + 8);
  const auto vt = qformer_stub(Tensor::from({16, 8}, rows), stub);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t j = 0; j < 8; ++j) CHECK(vt.tokens.at(q, j) == doctest::Approx(row[j]));
}

TEST_CASE("zero query averages the patches") {
  const VisionConfig c;
  auto stub = init_vision_stub(c, 5);
  stub.queries = Tensor::zeros({1, 8});
  Rng rng(6);
  std::vector<double> v(16 * 8);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const auto vt = qformer_stub(Tensor::from({16, 8}, v), stub);
  for (std::size_t j = 0; j < 8; ++j) {
    double mean = 0.0;
    for (std::size_t p = 0; p < 16; ++p) mean += v[p * 8 + j];
    CHECK(vt.tokens.at(0, j) == doctest::Approx(mean / 16));
  }
}

TEST_CASE("two-query two-patch miniature") {
  VisionStub stub;
  stub.queries = Tensor::from({2, 2}, {1, 0, 0, 2});
  const auto feats = Tensor::from({2, 2}, {1, 2, 3, -1});
  const auto vt = qformer_stub(feats, stub);
  const double s = 1.0 / std::sqrt(2.0);
  // Query 0 scores: [1, 3]; query 1 scores: [4, -2].
  const auto p0 = oracle::softmax({1 * s, 3 * s});
  const auto p1 = oracle::softmax({4 * s, -2 * s});
  CHECK(vt.tokens.at(0, 0) == doctest::Approx(p0[0] * 1 + p0[1] * 3));
  CHECK(vt.tokens.at(0, 1) == doctest::Approx(p0[0] * 2 + p0[1] * -1));
  CHECK(vt.tokens.at(1, 0) == doctest::Approx(p1[0] * 1 + p1[1] * 3));
  CHECK(vt.tokens.at(1, 1) == doctest::Approx(p1[0] * 2 + p1[1] * -1));
}

TEST_CASE("projection cases") {
  const VisionConfig c;
  Rng rng(7);
  std::vector<double> v(4 * 8);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const VisualTokens vt{Tensor::from({4, 8}, v)};

  const VisualProjection zero{Tensor::zeros({8, 16}), Tensor::zeros({16})};
  const auto zeroed = project_visual(vt, zero);
  for (double x : zeroed.data()) CHECK(x == 0.0);

  std::vector<double> eye(64, 0.0);
  for (int i = 0; i < 8; ++i) eye[i * 8 + i] = 1.0;
  const VisualProjection id{Tensor::from({8, 8}, eye), Tensor::zeros({8})};
  CHECK(same_bits(project_visual(vt, id), vt.tokens));

  const auto proj = init_projection(c, 16, 11);
  const auto out = project_visual(vt, proj);
  const auto want = oracle::matmul(v, {proj.weight.data().begin(), proj.weight.data().end()}, 4, 8, 16);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      CHECK(out.at(i, j) == doctest::Approx(want[i * 16 + j] + proj.bias.data()[j]));

  CHECK_THROWS_AS(project_visual(VisualTokens{Tensor::zeros({4, 7})}, proj), ShapeError);
}

TEST_CASE("image shape checks") {
  const VisionConfig c;
  const auto stub = init_vision_stub(c, 1);
  SyntheticImage small{8, 8, std::vector<double>(64), 0, 0};
  CHECK_THROWS_AS(encode_image(small, stub, c), ShapeError);
  SyntheticImage lying{16, 16, std::vector<double>(10), 0, 0};
  CHECK_THROWS_AS(encode_image(lying, stub, c), ShapeError);
  CHECK_THROWS_AS(qformer_stub(Tensor::zeros({16, 5}), stub), ShapeError);
  VisionConfig bad;
  bad.patch_size = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("feature file round trip and corruption") {
  Rng rng(8);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const auto m = Tensor::from({3, 4}, v);
  const auto bytes = encode_feature_bytes(m);
  CHECK(bytes.size() == 8 + 4 + 4 + 12 * 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "AG4FEAT1");
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 4);
  CHECK(same_bits(decode_feature_bytes(bytes), m));

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_feature_bytes(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_feature_bytes(bad_magic), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_feature_bytes(trailing), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "ag4_test_feature.feat";
  write_feature_file(path.string(), m);
  CHECK(same_bits(read_feature_file(path.string()), m));
  std::filesystem::remove(path);
  CHECK_THROWS(read_feature_file(path.string()));
}
