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

#include "ag4/freeze_policy.h"

#include <bit>
#include <cstring>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ag4 {

std::string to_string(Preset preset) {
  return preset == Preset::kArtGpt4 ? "artgpt4" : "minigpt4";
}

Preset preset_from_string(const std::string& name) {
  if (name == "artgpt4") return Preset::kArtGpt4;
  if (name == "minigpt4") return Preset::kMiniGpt4;
  throw std::invalid_argument("unknown preset '" + name +
                              "' (expected artgpt4 or minigpt4)");
}

ParamPolicy::ParamPolicy(Preset preset, std::vector<PolicyEntry> entries)
    : preset_(preset), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].path, i).second) {
      throw std::invalid_argument("policy: duplicate path " + entries_[i].path);
    }
  }
}

const PolicyEntry* ParamPolicy::find(const std::string& path) const {
  auto it = index_.find(path);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

bool ParamPolicy::trainable(const std::string& path) const {
  const PolicyEntry* e = find(path);
  if (!e) throw std::out_of_range("policy: unknown parameter " + path);
  return e->trainable;
}

std::size_t ParamPolicy::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.numel();
  }
  return n;
}

std::size_t ParamPolicy::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.numel();
  return n;
}

std::size_t ParamPolicy::frozen_count() const {
  return total_count() - trainable_count();
}

namespace {

bool artgpt4_trains(const ParamSpec& spec) {
  switch (spec.kind) {
    case ParamKind::kAdapter:
    case ParamKind::kMlpNorm:
    case ParamKind::kVisualProjection:
      return true;
    case ParamKind::kAttentionNorm:
      // 1-based block N is odd.
      return (spec.block + 1) % 2 == 1;
    default:
      return false;
  }
}

}  // namespace

ParamPolicy build_policy(const ModelConfig& config, const VisionConfig& vision,
                         Preset preset) {
  std::vector<PolicyEntry> entries;
  for (auto& spec : enumerate_params(config, vision)) {
    const bool trainable = preset == Preset::kArtGpt4
                               ? artgpt4_trains(spec)
                               : spec.kind == ParamKind::kVisualProjection;
    entries.push_back(PolicyEntry{spec.path, spec.shape, spec.kind, spec.block,
                                  trainable});
  }
  return ParamPolicy(preset, std::move(entries));
}

void apply_policy(Model& model, const ParamPolicy& policy) {
  auto params = model.named_parameters();
  if (params.size() != policy.entries().size()) {
    throw std::invalid_argument("apply_policy: model has " +
                                std::to_string(params.size()) +
                                " parameters, policy covers " +
                                std::to_string(policy.entries().size()));
  }
  for (auto& [path, tensor] : params) {
    const PolicyEntry* e = policy.find(path);
    if (!e) throw std::invalid_argument("apply_policy: no policy entry for " + path);
    if (e->shape != tensor.shape()) {
      throw std::invalid_argument("apply_policy: " + path + " has shape " +
                                  shape_to_string(tensor.shape()) +
                                  ", policy expects " + shape_to_string(e->shape));
    }
    tensor.set_requires_grad(e->trainable);
  }
}

WeightSnapshot snapshot_weights(const Model& model) {
  WeightSnapshot snap;
  for (const auto& [path, tensor] : model.named_parameters()) {
    snap.emplace(path, std::vector<double>(tensor.data().begin(), tensor.data().end()));
  }
  return snap;
}

bool assert_frozen_unchanged(const WeightSnapshot& before,
                             const WeightSnapshot& after,
                             const ParamPolicy& policy) {
  if (before.size() != after.size()) {
    throw std::invalid_argument("assert_frozen_unchanged: snapshots cover " +
                                std::to_string(before.size()) + " and " +
                                std::to_string(after.size()) + " paths");
  }
  for (auto a = before.begin(), b = after.begin(); a != before.end(); ++a, ++b) {
    if (a->first != b->first) {
      throw std::invalid_argument("assert_frozen_unchanged: path mismatch " +
                                  a->first + " vs " + b->first);
    }
  }
  bool unchanged = true;
  for (const auto& [path, values] : before) {
    if (policy.trainable(path)) continue;
    const auto& other = after.at(path);
    if (values.size() != other.size() ||
        std::memcmp(values.data(), other.data(), values.size() * sizeof(double)) != 0) {
      unchanged = false;
    }
  }
  return unchanged;
}

std::string render_policy_table(const ParamPolicy& policy) {
  std::size_t width = 4;
  for (const auto& e : policy.entries()) width = std::max(width, e.path.size());
  std::ostringstream os;
  os << "preset: " << to_string(policy.preset()) << "\n";
  os << std::left << std::setw(static_cast<int>(width)) << "path" << "  "
     << std::setw(10) << "shape" << "  " << std::right << std::setw(7) << "count"
     << "  trainable\n";
  for (const auto& e : policy.entries()) {
    os << std::left << std::setw(static_cast<int>(width)) << e.path << "  "
       << std::setw(10) << shape_to_string(e.shape) << "  " << std::right
       << std::setw(7) << e.numel() << "  " << (e.trainable ? "yes" : "no") << "\n";
  }
  os << "trainable: " << policy.trainable_count() << "\n";
  os << "frozen:    " << policy.frozen_count() << "\n";
  os << "total:     " << policy.total_count() << "\n";
  return os.str();
}

std::string render_policy_json(const ParamPolicy& policy) {
  nlohmann::ordered_json j;
  j["preset"] = to_string(policy.preset());
  j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& e : policy.entries()) {
    j["parameters"].push_back({{"path", e.path},
                               {"shape", e.shape},
                               {"count", e.numel()},
                               {"trainable", e.trainable}});
  }
  j["trainable"] = policy.trainable_count();
  j["frozen"] = policy.frozen_count();
  j["total"] = policy.total_count();
  return j.dump(2) + "\n";
}

}  // namespace ag4
