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

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "ag4/freeze_policy.h"
#include "ag4/transformer.h"
#include "ag4/vision_bridge.h"
#include "json.hpp"

namespace ag4 {

// Optimizer and schedule settings. Defaults are the published stage-1
// hyperparameters; see TrainConfig::toy() for the desk-scale profile.
struct TrainConfig {
  double init_lr = 1e-7;
  double min_lr = 8e-7;
  double warmup_lr = 1e-8;
  double weight_decay = 0.05;
  std::int64_t max_epochs = 2;
  std::int64_t batch_size = 32;
  std::int64_t warmup_steps = 5000;
  std::int64_t iters_per_epoch = 5000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  static TrainConfig paper() { return {}; }
  static TrainConfig toy();

  std::int64_t total_steps() const { return max_epochs * iters_per_epoch; }
  void validate() const;
};

struct RunConfig {
  std::string profile = "toy";  // "toy" or "paper"
  ModelConfig model;
  VisionConfig vision;
  TrainConfig train;
  Preset preset = Preset::kArtGpt4;
};

// Reference desk-scale model: 2 blocks, hidden 16, 2 heads, vocab 32.
RunConfig profile_defaults(const std::string& profile);

nlohmann::ordered_json to_json(const RunConfig& config);
// Starts from profile_defaults(j["profile"]) and applies the overrides in
// "model", "vision", "train" and "preset". Unknown keys are errors.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
// SHA-256 of the canonical JSON of everything that shapes a training run.
Digest config_digest(const RunConfig& config);
std::string to_hex(const Digest& digest);

}  // namespace ag4
