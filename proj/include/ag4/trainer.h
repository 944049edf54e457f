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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ag4/config.h"
#include "ag4/freeze_policy.h"
#include "ag4/model.h"
#include "ag4/synth_data.h"

namespace ag4 {

// Linear warmup from warmup_lr to init_lr over warmup_steps, then a half
// cosine from init_lr to min_lr at total_steps. Requires
// 0 <= step <= total_steps and total_steps > warmup_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

namespace schedule_detail {
// The two branches of lr_at, exposed for continuity checks. Both are
// written so that they return init_lr exactly at step == warmup_steps.
double warmup_branch(std::int64_t step, const TrainConfig& cfg);
double cosine_branch(std::int64_t step, std::int64_t total_steps,
                     const TrainConfig& cfg);
}  // namespace schedule_detail

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::int64_t t = 0;  // completed updates
  std::map<std::string, Moments> moments;
};

// One decoupled-weight-decay Adam update on the given parameters. A
// parameter without a gradient is treated as having a zero gradient.
void adamw_step(std::span<NamedTensor> params, AdamState& state, double lr,
                const TrainConfig& cfg);

enum class Stage { kStage1 = 1, kStage2 = 2 };
std::string to_string(Stage stage);

struct LossRecord {
  std::int64_t step;
  Stage stage;
  double lr;
  double loss;
};

struct NamedArray {
  std::string path;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  Stage stage = Stage::kStage1;
  std::int64_t step = 0;  // next step to run
  Digest config_digest{};
  std::vector<NamedArray> weights;  // model parameters in enumeration order
  AdamState optimizer;
};

// Builds the sequence fed to the model for one example.
SequenceInput stage1_sequence(const Model& model, const Example& ex);
SequenceInput stage2_sequence(const Model& model, const Example& ex,
                              const std::vector<int>& instruction);

// Owns the optimizer state of one run over `model`. The model's
// requires_grad flags are set from the policy on construction.
class Trainer {
 public:
  Trainer(Model& model, ParamPolicy policy, RunConfig config, Stage stage,
          InstructionPool pool = default_instruction_pool());

  std::int64_t step() const { return state_.t; }
  std::int64_t total_steps() const { return config_.train.total_steps(); }
  Stage stage() const { return stage_; }
  const ParamPolicy& policy() const { return policy_; }

  // Restores weights, moments and step from a checkpoint of the same stage
  // and configuration.
  void resume(const Checkpoint& ckpt);

  // Runs one optimizer step. Throws on an empty dataset.
  LossRecord train_step(std::span<const Example> data);

  // Runs steps until `until` (default: total_steps) and returns their losses.
  std::vector<LossRecord> run(std::span<const Example> data,
                              std::optional<std::int64_t> until = std::nullopt);

  Checkpoint checkpoint() const;

  // Mean loss over the whole dataset; stage 2 uses instruction i mod pool size.
  double evaluate(std::span<const Example> data) const;
  // Fraction of target tokens predicted by argmax.
  double token_accuracy(std::span<const Example> data) const;

 private:
  SequenceInput sequence_for(const Example& ex, std::size_t instruction) const;

  Model& model_;
  ParamPolicy policy_;
  RunConfig config_;
  Stage stage_;
  InstructionPool pool_;
  AdamState state_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
};

TrainResult train_stage1(Model& model, const ParamPolicy& policy,
                         std::span<const Example> data, const RunConfig& config);
TrainResult train_stage2(Model& model, const ParamPolicy& policy,
                         std::span<const Example> data, const RunConfig& config,
                         const InstructionPool& pool = default_instruction_pool());

// Copies checkpoint weights into the model. Paths and shapes must match.
void load_weights(Model& model, const std::vector<NamedArray>& weights);
std::vector<NamedArray> collect_weights(const Model& model);

// "step,stage,lr,loss" with round-trip precision.
std::string loss_trace_csv(const std::vector<LossRecord>& trace);

// ---- checkpoint files -------------------------------------------------------
//
// "AG4CKPT1", u8 version, 32-byte config digest, u8 stage tag, u64 step,
// u64 optimizer t, u32 array count, then per array: u32 path length, UTF-8
// path, u32 rank, u32 dims, f64 data. Weights use "model/<path>", moments
// "adam.m/<path>" and "adam.v/<path>". A SHA-256 of all preceding bytes
// closes the file.

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Throws FormatError naming the corrupted section.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ag4
