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

#include "ag4/config.h"

#include <openssl/sha.h>

#include <fstream>
#include <set>
#include <stdexcept>

namespace ag4 {

using nlohmann::json;
using nlohmann::ordered_json;

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.init_lr = 2e-2;
  c.min_lr = 2e-3;
  c.warmup_lr = 2e-3;
  c.weight_decay = 0.05;
  c.max_epochs = 1;
  c.batch_size = 4;
  c.warmup_steps = 5;
  c.iters_per_epoch = 50;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("train config: " + what);
  };
  if (!(init_lr > 0 && min_lr > 0 && warmup_lr > 0)) fail("learning rates must be positive");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (max_epochs <= 0 || iters_per_epoch <= 0) fail("max_epochs and iters_per_epoch must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (warmup_steps < 0 || warmup_steps > total_steps()) {
    fail("warmup_steps must lie in [0, max_epochs * iters_per_epoch]");
  }
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "toy") {
    c.train = TrainConfig::toy();
  } else if (profile == "paper") {
    c.train = TrainConfig::paper();
  } else {
    throw std::invalid_argument("unknown profile '" + profile +
                                "' (expected toy or paper)");
  }
  return c;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["profile"] = c.profile;
  j["preset"] = to_string(c.preset);
  const auto& m = c.model;
  j["model"] = {{"n_blocks", m.n_blocks},
                {"hidden", m.hidden},
                {"n_heads", m.n_heads},
                {"mlp_inner", m.mlp_inner},
                {"vocab_size", m.vocab_size},
                {"max_seq", m.max_seq},
                {"adapters_enabled", m.adapters_enabled},
                {"positional_mode", to_string(m.positional_mode)},
                {"rms_eps", m.rms_eps},
                {"bottleneck_divisor", m.bottleneck_divisor}};
  const auto& v = c.vision;
  j["vision"] = {{"image_size", v.image_size},
                 {"patch_size", v.patch_size},
                 {"vis_width", v.vis_width},
                 {"n_query", v.n_query}};
  const auto& t = c.train;
  j["train"] = {{"init_lr", t.init_lr},
                {"min_lr", t.min_lr},
                {"warmup_lr", t.warmup_lr},
                {"weight_decay", t.weight_decay},
                {"max_epochs", t.max_epochs},
                {"batch_size", t.batch_size},
                {"warmup_steps", t.warmup_steps},
                {"iters_per_epoch", t.iters_per_epoch},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"seed", t.seed}};
  return j;
}

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"profile", "preset", "model", "vision", "train"}, "config");
  std::string profile = "toy";
  read_field(j, "profile", profile, "config");
  RunConfig c = profile_defaults(profile);
  if (j.contains("preset")) c.preset = preset_from_string(j.at("preset").get<std::string>());
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"n_blocks", "hidden", "n_heads", "mlp_inner", "vocab_size", "max_seq",
                   "adapters_enabled", "positional_mode", "rms_eps", "bottleneck_divisor"},
               "config.model");
    read_field(m, "n_blocks", c.model.n_blocks, "model");
    read_field(m, "hidden", c.model.hidden, "model");
    read_field(m, "n_heads", c.model.n_heads, "model");
    read_field(m, "mlp_inner", c.model.mlp_inner, "model");
    read_field(m, "vocab_size", c.model.vocab_size, "model");
    read_field(m, "max_seq", c.model.max_seq, "model");
    read_field(m, "adapters_enabled", c.model.adapters_enabled, "model");
    read_field(m, "rms_eps", c.model.rms_eps, "model");
    read_field(m, "bottleneck_divisor", c.model.bottleneck_divisor, "model");
    if (m.contains("positional_mode")) {
      c.model.positional_mode =
          positional_mode_from_string(m.at("positional_mode").get<std::string>());
    }
  }
  if (j.contains("vision")) {
    const json& v = j.at("vision");
    check_keys(v, {"image_size", "patch_size", "vis_width", "n_query"}, "config.vision");
    read_field(v, "image_size", c.vision.image_size, "vision");
    read_field(v, "patch_size", c.vision.patch_size, "vision");
    read_field(v, "vis_width", c.vision.vis_width, "vision");
    read_field(v, "n_query", c.vision.n_query, "vision");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"init_lr", "min_lr", "warmup_lr", "weight_decay", "max_epochs",
                   "batch_size", "warmup_steps", "iters_per_epoch", "beta1", "beta2",
                   "adam_eps", "seed"},
               "config.train");
    read_field(t, "init_lr", c.train.init_lr, "train");
    read_field(t, "min_lr", c.train.min_lr, "train");
    read_field(t, "warmup_lr", c.train.warmup_lr, "train");
    read_field(t, "weight_decay", c.train.weight_decay, "train");
    read_field(t, "max_epochs", c.train.max_epochs, "train");
    read_field(t, "batch_size", c.train.batch_size, "train");
    read_field(t, "warmup_steps", c.train.warmup_steps, "train");
    read_field(t, "iters_per_epoch", c.train.iters_per_epoch, "train");
    read_field(t, "beta1", c.train.beta1, "train");
    read_field(t, "beta2", c.train.beta2, "train");
    read_field(t, "adam_eps", c.train.adam_eps, "train");
    read_field(t, "seed", c.train.seed, "train");
  }
  c.model.validate();
  c.vision.validate();
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest d{};
  SHA256(bytes.data(), bytes.size(), d.data());
  return d;
}

Digest config_digest(const RunConfig& config) {
  const std::string text = to_json(config).dump();
  return sha256({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string to_hex(const Digest& digest) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (auto b : digest) {
    out += kHex[b >> 4];
    out += kHex[b & 15];
  }
  return out;
}

}  // namespace ag4
