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

#include "ag4/rng.h"
#include "ag4/transformer.h"
#include "doctest.h"
#include "oracles.h"

using namespace ag4;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat rmsn(Mat a, const Tensor& gain, double eps) {
  for (auto& row : a) {
    double ss = 0.0;
    for (double v : row) ss += v * v;
    const double r = std::sqrt(ss / row.size() + eps);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = gain.data()[j] * row[j] / r;
  }
  return a;
}

Mat rope(Mat a, std::size_t heads) {
  const std::size_t d = a[0].size() / heads;
  for (std::size_t p = 0; p < a.size(); ++p)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < d / 2; ++i) {
        const double th = p * std::pow(10000.0, -2.0 * i / d);
        double& x0 = a[p][h * d + 2 * i];
        double& x1 = a[p][h * d + 2 * i + 1];
        const double y0 = x0 * std::cos(th) - x1 * std::sin(th);
        const double y1 = x0 * std::sin(th) + x1 * std::cos(th);
        x0 = y0;
        x1 = y1;
      }
  return a;
}

// Straight-line re-implementation of one pre-norm block.
Mat oracle_block(const Mat& x, const BlockWeights& w, const ModelConfig& c) {
  const std::size_t seq = x.size(), d = c.head_dim();
  const Mat n = rmsn(x, w.norm_attn_gain, c.rms_eps);
  const Mat q = rope(mm(n, to_mat(w.wq)), c.n_heads);
  const Mat k = rope(mm(n, to_mat(w.wk)), c.n_heads);
  const Mat v = mm(n, to_mat(w.wv));
  Mat heads(seq, std::vector<double>(c.hidden, 0.0));
  for (std::size_t h = 0; h < c.n_heads; ++h)
    for (std::size_t i = 0; i < seq; ++i) {
      std::vector<double> s;
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += q[i][h * d + t] * k[j][h * d + t];
        s.push_back(dot / std::sqrt(static_cast<double>(d)));
      }
      const auto p = oracle::softmax(s);
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t t = 0; t < d; ++t) heads[i][h * d + t] += p[j] * v[j][h * d + t];
    }
  Mat a = plus(x, mm(heads, to_mat(w.wo)));
  if (w.adapter) {
    Mat down = mm(a, to_mat(w.adapter->w_down));
    for (auto& row : down)
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double z = row[j] + w.adapter->b_down.data()[j];
        row[j] = z * oracle::normal_cdf(z);
      }
    Mat up = mm(down, to_mat(w.adapter->w_up));
    for (auto& row : up)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += w.adapter->b_up.data()[j];
    a = plus(a, up);
  }
  const Mat u = rmsn(a, w.norm_mlp_gain, c.rms_eps);
  Mat g = mm(u, to_mat(w.w_gate));
  const Mat up = mm(u, to_mat(w.w_up_mlp));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[i].size(); ++j)
      g[i][j] = g[i][j] / (1.0 + std::exp(-g[i][j])) * up[i][j];
  return plus(a, mm(g, to_mat(w.w_down_mlp)));
}

void randomize(Tensor& t, Rng& rng, double bound) {
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
}

ModelConfig small_config() {
  ModelConfig c;
  c.n_blocks = 1;
  c.hidden = 4;
  c.n_heads = 2;
  c.mlp_inner = 8;
  c.vocab_size = 6;
  c.max_seq = 4;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.hidden = 10;  // not divisible by the bottleneck divisor
  c.n_heads = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.n_blocks = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(positional_mode_from_string(to_string(PositionalMode::kAbsolute)) ==
        PositionalMode::kAbsolute);
  CHECK_THROWS(positional_mode_from_string("learned"));
}

TEST_CASE("single position attends only to itself") {
  const ModelConfig c = small_config();
  const auto w = init_block(c, 3);
  const auto x = Tensor::from({1, 4}, {0.3, -1.0, 2.0, 0.5});
  const auto heads = attention_heads(x, w, c);
  const auto v = matmul(x, w.wv);
  for (std::size_t j = 0; j < 4; ++j) CHECK(heads.at(0, j) == doctest::Approx(v.at(0, j)));
}

TEST_CASE("zero query and key weights average the causal prefix") {
  const ModelConfig c = small_config();
  auto w = init_block(c, 4);
  w.wq = Tensor::zeros({4, 4});
  w.wk = Tensor::zeros({4, 4});
  Rng rng(1);
  Tensor x = Tensor::zeros({3, 4});
  randomize(x, rng, 1.0);
  const auto heads = attention_heads(x, w, c);
  const auto v = matmul(x, w.wv);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0.0;
      for (std::size_t p = 0; p <= i; ++p) mean += v.at(p, j);
      CHECK(heads.at(i, j) == doctest::Approx(mean / (i + 1)));
    }
}

TEST_CASE("two-token single-head attention by hand") {
  ModelConfig c;
  c.hidden = 2;
  c.n_heads = 1;
  c.bottleneck_divisor = 1;
  c.positional_mode = PositionalMode::kAbsolute;
  BlockWeights w = init_block(c, 0);
  w.wq = Tensor::from({2, 2}, {1, 0, 0, 1});
  w.wk = Tensor::from({2, 2}, {2, 0, 0, 1});
  w.wv = Tensor::from({2, 2}, {1, 1, 0, 1});
  const auto x = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto out = attention_heads(x, w, c);
  // q = x, k = [[2,0],[0,1]], v = [[1,1],[0,1]]. Row 1 scores: q1.k0 = 0, q1.k1 = 1.
  const auto p = oracle::softmax({0.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
  CHECK(out.at(0, 0) == doctest::Approx(1.0));
  CHECK(out.at(0, 1) == doctest::Approx(1.0));
  CHECK(out.at(1, 0) == doctest::Approx(p[0] * 1.0 + p[1] * 0.0));
  CHECK(out.at(1, 1) == doctest::Approx(p[0] * 1.0 + p[1] * 1.0));
}

TEST_CASE("all-zero block weights pass the input through") {
  const ModelConfig c = small_config();
  BlockWeights w = init_block(c, 5);
  for (auto* t : {&w.wq, &w.wk, &w.wv, &w.wo, &w.w_gate, &w.w_up_mlp, &w.w_down_mlp})
    *t = Tensor::zeros(t->shape());
  w.adapter->w_down = Tensor::zeros(w.adapter->w_down.shape());
  const auto x = Tensor::from({2, 4}, {1, 2, 3, 4, -1, 0, 1, 0.5});
  const auto y = block_forward(x, w, c);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("block forward matches straight-line oracle") {
  for (bool adapters : {false, true}) {
    ModelConfig c = small_config();
    c.adapters_enabled = adapters;
    BlockWeights w = init_block(c, 9);
    Rng rng(10);
    for (auto* t : {&w.norm_attn_gain, &w.norm_mlp_gain}) randomize(*t, rng, 1.5);
    if (w.adapter) {
      randomize(w.adapter->b_down, rng, 0.5);
      randomize(w.adapter->w_up, rng, 0.5);
      randomize(w.adapter->b_up, rng, 0.5);
    }
    Tensor x = Tensor::zeros({2, 4});
    randomize(x, rng, 1.0);
    const auto got = block_forward(x, w, c);
    const auto want = oracle_block(to_mat(x), w, c);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(got.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("full model logits and loss match the oracle") {
  ModelConfig c;  // 2 blocks, hidden 16, vocab 32
  const auto lm = init_language_model(c, 12);
  Rng rng(13);
  SequenceInput in;
  for (int i = 0; i < 8; ++i) in.tokens.push_back(static_cast<int>(rng.below(32)));
  in.targets.assign(8, -1);
  for (int i = 0; i < 7; ++i) in.targets[i] = in.tokens[i + 1];
  const auto r = model_forward(lm, in);

  Mat x;
  for (int t : in.tokens) {
    std::vector<double> row(16);
    for (std::size_t j = 0; j < 16; ++j) row[j] = lm.tok_embed.at(t, j);
    x.push_back(row);
  }
  for (const auto& b : lm.blocks) x = oracle_block(x, b, c);
  const Mat logits = mm(rmsn(x, lm.final_norm_gain, c.rms_eps), to_mat(lm.unembed));
  double loss = 0.0;
  for (int i = 0; i < 7; ++i) {
    const auto p = oracle::softmax(logits[i]);
    loss -= std::log(p[in.targets[i]]);
    for (std::size_t j = 0; j < 32; ++j)
      CHECK(r.logits.at(i, j) == doctest::Approx(logits[i][j]).epsilon(1e-12));
  }
  CHECK(std::fabs(r.loss.item() - loss / 7.0) < 1e-10);
}

TEST_CASE("uniform logits give log vocab loss") {
  ModelConfig c;
  auto lm = init_language_model(c, 1);
  lm.unembed = Tensor::zeros(lm.unembed.shape());
  SequenceInput in;
  in.tokens = {1, 5, 9};
  in.targets = {5, 9, 2};
  CHECK(model_forward(lm, in).loss.item() == doctest::Approx(std::log(32.0)).epsilon(1e-14));
}

TEST_CASE("adapters off and zero-init adapters on give bitwise identical logits") {
  ModelConfig on;
  ModelConfig off = on;
  off.adapters_enabled = false;
  const auto a = init_language_model(on, 77);
  const auto b = init_language_model(off, 77);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    SequenceInput in;
    for (int i = 0; i < 8; ++i) in.tokens.push_back(static_cast<int>(rng.below(32)));
    const auto la = model_forward(a, in).logits;
    const auto lb = model_forward(b, in).logits;
    CHECK(std::memcmp(la.data().data(), lb.data().data(), la.numel() * sizeof(double)) == 0);
  }
}

TEST_CASE("empty visual prefix equals the pure language model") {
  ModelConfig c;
  const auto lm = init_language_model(c, 2);
  SequenceInput plain;
  plain.tokens = {1, 4, 7};
  SequenceInput with_empty = plain;
  with_empty.visual = Tensor::zeros({0, 16});
  const auto a = model_forward(lm, plain).logits;
  const auto b = model_forward(lm, with_empty).logits;
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0);
}

TEST_CASE("causal mask: perturbing position p leaves earlier logits unchanged") {
  for (auto mode : {PositionalMode::kRotary, PositionalMode::kAbsolute}) {
    ModelConfig c;
    c.positional_mode = mode;
    const auto lm = init_language_model(c, 31);
    Rng rng(5);
    SequenceInput in;
    in.visual = Tensor::zeros({3, 16});
    randomize(in.visual, rng, 1.0);
    in.tokens = {1, 12, 17, 2, 9};
    const auto base = model_forward(lm, in).logits;
    for (std::size_t p = 0; p < 8; ++p) {
      SequenceInput changed = in;
      if (p < 3) {
        changed.visual = in.visual.clone();
        changed.visual.mutable_data()[p * 16] += 0.5;
      } else {
        changed.tokens[p - 3] = (changed.tokens[p - 3] + 1) % 32;
      }
      const auto out = model_forward(lm, changed).logits;
      for (std::size_t i = 0; i < 8; ++i) {
        const bool same =
            std::memcmp(base.data().data() + i * 32, out.data().data() + i * 32, 32 * sizeof(double)) == 0;
        if (i < p) {
          CHECK(same);
        } else if (i == p) {
          CHECK_FALSE(same);
        }
      }
    }
  }
}

TEST_CASE("sequence builders place targets") {
  const auto cap = caption_sequence(Tensor::zeros({4, 16}), {1, 12, 17, 2});
  CHECK(cap.length() == 8);
  CHECK(cap.targets == std::vector<int>{-1, -1, -1, -1, 12, 17, 2, -1});
  const auto tpl = templated_sequence({1, 3, 4}, Tensor::zeros({4, 16}), {12, 17, 2});
  CHECK(tpl.length() == 10);
  CHECK(tpl.targets == std::vector<int>{-1, -1, -1, -1, -1, -1, 12, 17, 2, -1});
  CHECK_THROWS_AS(templated_sequence({}, Tensor(), {1}), std::invalid_argument);
}

TEST_CASE("model_forward input validation") {
  ModelConfig c;
  const auto lm = init_language_model(c, 2);
  SequenceInput in;
  in.tokens = {1, 40};
  CHECK_THROWS_AS(model_forward(lm, in), std::out_of_range);
  in.tokens = {1, 2};
  in.targets = {2};
  CHECK_THROWS_AS(model_forward(lm, in), ShapeError);
  in.targets = {2, 32};
  CHECK_THROWS_AS(model_forward(lm, in), std::out_of_range);
  in.targets.clear();
  in.visual = Tensor::zeros({2, 8});
  CHECK_THROWS_AS(model_forward(lm, in), ShapeError);
  SequenceInput empty;
  CHECK_THROWS_AS(model_forward(lm, empty), ShapeError);
  SequenceInput longer;
  longer.tokens.assign(17, 3);
  CHECK_THROWS_AS(model_forward(lm, longer), ShapeError);
  CHECK(model_forward(lm, SequenceInput{{}, Tensor(), {1, 2}, {}}).loss.defined() == false);
}

TEST_CASE("block init uses independent streams for adapters") {
  ModelConfig on;
  ModelConfig off = on;
  off.adapters_enabled = false;
  const auto a = init_block(on, 3);
  const auto b = init_block(off, 3);
  CHECK(a.adapter.has_value());
  CHECK_FALSE(b.adapter.has_value());
  CHECK(std::memcmp(a.w_down_mlp.data().data(), b.w_down_mlp.data().data(),
                    a.w_down_mlp.numel() * sizeof(double)) == 0);
}
