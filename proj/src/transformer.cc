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

#include "ag4/transformer.h"

#include <cmath>
#include <stdexcept>

namespace ag4 {

std::string to_string(PositionalMode mode) {
  return mode == PositionalMode::kRotary ? "rotary" : "absolute";
}

PositionalMode positional_mode_from_string(const std::string& name) {
  if (name == "rotary") return PositionalMode::kRotary;
  if (name == "absolute") return PositionalMode::kAbsolute;
  throw std::invalid_argument("unknown positional mode '" + name + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("model config: " + what);
  };
  if (n_blocks == 0) fail("n_blocks must be positive");
  if (hidden == 0) fail("hidden must be positive");
  if (n_heads == 0) fail("n_heads must be positive");
  if (hidden % n_heads != 0) fail("hidden must be divisible by n_heads");
  if (bottleneck_divisor == 0 || hidden % bottleneck_divisor != 0) {
    fail("hidden must be divisible by the adapter bottleneck divisor");
  }
  if (hidden % 4 != 0) fail("hidden must be divisible by 4");
  if (positional_mode == PositionalMode::kRotary && head_dim() % 2 != 0) {
    fail("rotary positions need an even head width");
  }
  if (mlp_inner == 0) fail("mlp_inner must be positive");
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (max_seq == 0) fail("max_seq must be positive");
  if (!(rms_eps > 0.0)) fail("rms_eps must be positive");
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double bound,
                      Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(v));
}

double fan_in_bound(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

void check_seq(std::size_t seq, const ModelConfig& config, const char* op) {
  if (seq == 0 || seq > config.max_seq) {
    throw ShapeError(std::string(op) + ": sequence length " +
                     std::to_string(seq) + " outside [1, " +
                     std::to_string(config.max_seq) + "]");
  }
}

}  // namespace

BlockWeights init_block(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0));
  const std::size_t h = config.hidden, f = config.mlp_inner;
  BlockWeights w;
  w.norm_attn_gain = Tensor::ones({h});
  w.wq = uniform_matrix(h, h, fan_in_bound(h), rng);
  w.wk = uniform_matrix(h, h, fan_in_bound(h), rng);
  w.wv = uniform_matrix(h, h, fan_in_bound(h), rng);
  w.wo = uniform_matrix(h, h, fan_in_bound(h), rng);
  w.norm_mlp_gain = Tensor::ones({h});
  w.w_gate = uniform_matrix(h, f, fan_in_bound(h), rng);
  w.w_up_mlp = uniform_matrix(h, f, fan_in_bound(h), rng);
  w.w_down_mlp = uniform_matrix(f, h, fan_in_bound(f), rng);
  if (config.adapters_enabled) {
    Rng adapter_rng(mix_seed(seed, 1));
    w.adapter = init_adapter(h, adapter_rng, config.bottleneck_divisor);
  }
  return w;
}

Tensor attention_heads(const Tensor& x, const BlockWeights& w,
                       const ModelConfig& config) {
  if (x.dim() != 2 || x.cols() != config.hidden) {
    throw ShapeError("causal_attention: input " + shape_to_string(x.shape()) +
                     " does not have width " + std::to_string(config.hidden));
  }
  check_seq(x.rows(), config, "causal_attention");
  Tensor q = matmul(x, w.wq);
  Tensor k = matmul(x, w.wk);
  Tensor v = matmul(x, w.wv);
  if (config.positional_mode == PositionalMode::kRotary) {
    q = rotary(q, config.n_heads);
    k = rotary(k, config.n_heads);
  }
  const std::size_t d = config.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Tensor> heads;
  heads.reserve(config.n_heads);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * d, d);
    Tensor kh = slice_cols(k, h * d, d);
    Tensor vh = slice_cols(v, h * d, d);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
    heads.push_back(matmul(softmax_rows(scores, /*causal=*/true), vh));
  }
  return concat_cols(heads);
}

Tensor causal_attention(const Tensor& x, const BlockWeights& w,
                        const ModelConfig& config) {
  return matmul(attention_heads(x, w, config), w.wo);
}

Tensor gated_mlp(const Tensor& u, const BlockWeights& w) {
  Tensor gate = silu(matmul(u, w.w_gate));
  return matmul(mul(gate, matmul(u, w.w_up_mlp)), w.w_down_mlp);
}

Tensor block_forward(const Tensor& x, const BlockWeights& w,
                     const ModelConfig& config) {
  Tensor h = add(x, causal_attention(
                        rms_norm(x, w.norm_attn_gain, config.rms_eps), w, config));
  Tensor a = h;
  if (config.adapters_enabled) {
    if (!w.adapter) {
      throw std::invalid_argument("block_forward: adapters enabled but block has none");
    }
    a = adapter_forward(h, *w.adapter);
  }
  return add(a, gated_mlp(rms_norm(a, w.norm_mlp_gain, config.rms_eps), w));
}

LanguageModel init_language_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0));
  LanguageModel m;
  m.config = config;
  m.tok_embed = uniform_matrix(config.vocab_size, config.hidden, 1.0, rng);
  if (config.positional_mode == PositionalMode::kAbsolute) {
    m.pos_embed = uniform_matrix(config.max_seq, config.hidden, 0.1, rng);
  }
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    m.blocks.push_back(init_block(config, mix_seed(seed, 100 + b)));
  }
  m.final_norm_gain = Tensor::ones({config.hidden});
  m.unembed = uniform_matrix(config.hidden, config.vocab_size, 1.0, rng);
  return m;
}

SequenceInput caption_sequence(Tensor visual, std::vector<int> caption) {
  SequenceInput in;
  in.visual = std::move(visual);
  in.tokens = std::move(caption);
  const std::size_t prefix = in.visual_rows();
  in.targets.assign(in.length(), -1);
  for (std::size_t i = 0; i + 1 < in.tokens.size(); ++i) {
    in.targets[prefix + i] = in.tokens[i + 1];
  }
  return in;
}

SequenceInput templated_sequence(std::vector<int> lead, Tensor visual,
                                 std::vector<int> response) {
  SequenceInput in;
  in.lead_tokens = std::move(lead);
  in.visual = std::move(visual);
  in.tokens = std::move(response);
  in.targets.assign(in.length(), -1);
  const std::size_t start = in.lead_tokens.size() + in.visual_rows();
  if (start == 0) {
    throw std::invalid_argument("templated_sequence: response needs a prompt");
  }
  for (std::size_t i = 0; i < in.tokens.size(); ++i) {
    in.targets[start - 1 + i] = in.tokens[i];
  }
  return in;
}

ForwardResult model_forward(const LanguageModel& model, const SequenceInput& in) {
  const ModelConfig& config = model.config;
  const std::size_t seq = in.length();
  check_seq(seq, config, "model_forward");
  if (!in.targets.empty() && in.targets.size() != seq) {
    throw ShapeError("model_forward: " + std::to_string(in.targets.size()) +
                     " targets for a sequence of " + std::to_string(seq));
  }
  auto check_ids = [&](const std::vector<int>& ids, const char* what) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw std::out_of_range(std::string("model_forward: ") + what + " id " +
                                std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config.vocab_size));
      }
    }
  };
  check_ids(in.lead_tokens, "token");
  check_ids(in.tokens, "token");
  for (int t : in.targets) {
    if (t >= static_cast<int>(config.vocab_size)) {
      throw std::out_of_range("model_forward: target id " + std::to_string(t) +
                              " outside vocabulary of " +
                              std::to_string(config.vocab_size));
    }
  }

  std::vector<Tensor> parts;
  if (!in.lead_tokens.empty()) parts.push_back(embedding(model.tok_embed, in.lead_tokens));
  if (in.visual.defined()) {
    if (in.visual.dim() != 2 || in.visual.cols() != config.hidden) {
      throw ShapeError("model_forward: visual prefix " +
                       shape_to_string(in.visual.shape()) +
                       " does not have width " + std::to_string(config.hidden));
    }
    if (in.visual.rows() > 0) parts.push_back(in.visual);
  }
  if (!in.tokens.empty()) parts.push_back(embedding(model.tok_embed, in.tokens));
  Tensor x = parts.size() == 1 ? parts[0] : concat_rows(parts);

  if (config.positional_mode == PositionalMode::kAbsolute) {
    std::vector<int> positions(seq);
    for (std::size_t i = 0; i < seq; ++i) positions[i] = static_cast<int>(i);
    x = add(x, embedding(model.pos_embed, positions));
  }
  for (const auto& block : model.blocks) x = block_forward(x, block, config);
  x = rms_norm(x, model.final_norm_gain, config.rms_eps);

  ForwardResult result;
  result.logits = matmul(x, model.unembed);
  if (!in.targets.empty()) result.loss = cross_entropy(result.logits, in.targets);
  return result;
}

}  // namespace ag4
