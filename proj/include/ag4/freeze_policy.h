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
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ag4/model.h"

namespace ag4 {

enum class Preset { kArtGpt4, kMiniGpt4 };

std::string to_string(Preset preset);
// Accepts "artgpt4" and "minigpt4".
Preset preset_from_string(const std::string& name);

struct PolicyEntry {
  std::string path;
  Shape shape;
  ParamKind kind;
  int block = -1;
  bool trainable = false;

  std::size_t numel() const { return shape_numel(shape); }
};

// Per-parameter trainability map. Immutable once built.
class ParamPolicy {
 public:
  ParamPolicy(Preset preset, std::vector<PolicyEntry> entries);

  Preset preset() const { return preset_; }
  const std::vector<PolicyEntry>& entries() const { return entries_; }
  const PolicyEntry* find(const std::string& path) const;
  // Throws std::out_of_range for unknown paths.
  bool trainable(const std::string& path) const;

  std::size_t trainable_count() const;
  std::size_t frozen_count() const;
  std::size_t total_count() const;

 private:
  Preset preset_;
  std::vector<PolicyEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// artgpt4: adapters, every pre-MLP norm gain, the pre-attention norm gain of
// blocks N = 1, 3, 5, ... (1-based) and the visual projection train;
// everything else is frozen. minigpt4: only the visual projection trains.
ParamPolicy build_policy(const ModelConfig& config, const VisionConfig& vision,
                         Preset preset);

// Sets requires_grad on every model parameter from the policy. Throws
// std::invalid_argument if the policy and model parameter sets differ.
void apply_policy(Model& model, const ParamPolicy& policy);

using WeightSnapshot = std::map<std::string, std::vector<double>>;

WeightSnapshot snapshot_weights(const Model& model);

// True iff every frozen parameter is bitwise identical in both snapshots.
// Throws std::invalid_argument when the snapshots cover different paths.
bool assert_frozen_unchanged(const WeightSnapshot& before,
                             const WeightSnapshot& after,
                             const ParamPolicy& policy);

std::string render_policy_table(const ParamPolicy& policy);
std::string render_policy_json(const ParamPolicy& policy);

}  // namespace ag4
