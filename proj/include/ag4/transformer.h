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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ag4/adapter.h"
#include "ag4/rng.h"
#include "ag4/tensor.h"

namespace ag4 {

enum class PositionalMode { kRotary, kAbsolute };

std::string to_string(PositionalMode mode);
PositionalMode positional_mode_from_string(const std::string& name);

struct ModelConfig {
  std::size_t n_blocks = 2;
  std::size_t hidden = 16;
  std::size_t n_heads = 2;
  std::size_t mlp_inner = 64;
  std::size_t vocab_size = 32;
  std::size_t max_seq = 16;
  bool adapters_enabled = true;
  PositionalMode positional_mode = PositionalMode::kRotary;
  double rms_eps = kDefaultRmsEps;
  std::size_t bottleneck_divisor = kBottleneckDivisor;

  // Throws std::invalid_argument naming the first broken constraint.
  void validate() const;
  std::size_t head_dim() const { return hidden / n_heads; }
};

// Pre-norm LLaMA-style block with an adapter between the attention
// residual and the pre-MLP norm.
struct BlockWeights {
  Tensor norm_attn_gain;  // [hidden]
  Tensor wq, wk, wv, wo;  // [hidden x hidden]
  std::optional<AdapterWeights> adapter;
  Tensor norm_mlp_gain;  // [hidden]
  Tensor w_gate;         // [hidden x mlp_inner]
  Tensor w_up_mlp;       // [hidden x mlp_inner]
  Tensor w_down_mlp;     // [mlp_inner x hidden]
};

// Each block and its adapter draw from independent streams of `seed`, so
// toggling adapters leaves every other weight unchanged.
BlockWeights init_block(const ModelConfig& config, std::uint64_t seed);

// Concatenated per-head attention outputs before the output projection.
Tensor attention_heads(const Tensor& x, const BlockWeights& w,
                       const ModelConfig& config);
// attention_heads(x) * wo.
Tensor causal_attention(const Tensor& x, const BlockWeights& w,
                        const ModelConfig& config);
// w_down_mlp * (silu(u * w_gate) . (u * w_up_mlp)).
Tensor gated_mlp(const Tensor& u, const BlockWeights& w);
Tensor block_forward(const Tensor& x, const BlockWeights& w,
                     const ModelConfig& config);

struct LanguageModel {
  ModelConfig config;
  Tensor tok_embed;  // [vocab x hidden]
  Tensor pos_embed;  // [max_seq x hidden], absolute mode only
  std::vector<BlockWeights> blocks;
  Tensor final_norm_gain;  // [hidden]
  Tensor unembed;          // [hidden x vocab]
};

LanguageModel init_language_model(const ModelConfig& config, std::uint64_t seed);

// One sequence: lead tokens, then visual prefix rows, then trailing tokens.
// targets[i] is the id to predict at position i, or -1 to exclude it.
struct SequenceInput {
  std::vector<int> lead_tokens;
  Tensor visual;  // [n_prefix x hidden]; may be undefined
  std::vector<int> tokens;
  std::vector<int> targets;  // empty: no loss

  std::size_t visual_rows() const { return visual.defined() ? visual.rows() : 0; }
  std::size_t length() const {
    return lead_tokens.size() + visual_rows() + tokens.size();
  }
};

// Visual prefix then caption; every caption token after the first is a
// target of the preceding caption position.
SequenceInput caption_sequence(Tensor visual, std::vector<int> caption);

// lead (e.g. BOS + instruction), visual prefix, response. Only response
// tokens are targets; the last visual row predicts the first response token.
SequenceInput templated_sequence(std::vector<int> lead, Tensor visual,
                                 std::vector<int> response);

struct ForwardResult {
  Tensor logits;  // [seq x vocab]
  Tensor loss;    // scalar; undefined when the input carries no targets
};

ForwardResult model_forward(const LanguageModel& model, const SequenceInput& in);

}  // namespace ag4
