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

#include <set>

#include "ag4/config.h"
#include "ag4/freeze_policy.h"
#include "ag4/trainer.h"
#include "doctest.h"
#include "json.hpp"

using namespace ag4;

namespace {

// Closed-form count of trainable scalars, written independently of the
// enumeration code.
std::size_t expected_artgpt4(std::size_t blocks, std::size_t hidden, std::size_t vis) {
  const std::size_t r = hidden / 4;
  const std::size_t adapter = hidden * r + r + r * hidden + hidden;
  const std::size_t odd_blocks = (blocks + 1) / 2;
  return blocks * adapter + blocks * hidden + odd_blocks * hidden + (vis * hidden + hidden);
}

}  // namespace

TEST_CASE("reference counts") {
  ModelConfig c;
  const VisionConfig v;
  c.n_blocks = 4;
  CHECK(build_policy(c, v, Preset::kArtGpt4).trainable_count() == 832);
  CHECK(build_policy(c, v, Preset::kMiniGpt4).trainable_count() == 144);
  c.n_blocks = 2;
  CHECK(build_policy(c, v, Preset::kArtGpt4).trainable_count() == 488);
  CHECK(build_policy(c, v, Preset::kMiniGpt4).trainable_count() == 144);
}

TEST_CASE("property: counts match the closed form across configs") {
  for (std::size_t blocks = 1; blocks <= 6; ++blocks) {
    for (std::size_t hidden : {8u, 16u, 32u}) {
      for (std::size_t vis : {4u, 8u}) {
        ModelConfig c;
        c.n_blocks = blocks;
        c.hidden = hidden;
        c.n_heads = 2;
        VisionConfig v;
        v.vis_width = vis;
        const auto art = build_policy(c, v, Preset::kArtGpt4);
        const auto mini = build_policy(c, v, Preset::kMiniGpt4);
        CHECK(art.trainable_count() == expected_artgpt4(blocks, hidden, vis));
        CHECK(mini.trainable_count() == vis * hidden + hidden);
        CHECK(art.total_count() == art.trainable_count() + art.frozen_count());
        CHECK(art.total_count() == mini.total_count());
      }
    }
  }
}

TEST_CASE("which parameters each preset trains") {
  ModelConfig c;
  c.n_blocks = 4;
  const auto art = build_policy(c, VisionConfig{}, Preset::kArtGpt4);
  std::set<std::string> trained;
  for (const auto& e : art.entries())
    if (e.trainable) trained.insert(e.path);
  const std::set<std::string> want = {
      "blocks.0.norm_attn_gain", "blocks.2.norm_attn_gain",
      "blocks.0.norm_mlp_gain",  "blocks.1.norm_mlp_gain",
      "blocks.2.norm_mlp_gain",  "blocks.3.norm_mlp_gain",
      "blocks.0.adapter.w_down", "blocks.0.adapter.b_down",
      "blocks.0.adapter.w_up",   "blocks.0.adapter.b_up",
      "blocks.1.adapter.w_down", "blocks.1.adapter.b_down",
      "blocks.1.adapter.w_up",   "blocks.1.adapter.b_up",
      "blocks.2.adapter.w_down", "blocks.2.adapter.b_down",
      "blocks.2.adapter.w_up",   "blocks.2.adapter.b_up",
      "blocks.3.adapter.w_down", "blocks.3.adapter.b_down",
      "blocks.3.adapter.w_up",   "blocks.3.adapter.b_up",
      "projection.weight",       "projection.bias"};
  CHECK(trained == want);
  CHECK_FALSE(art.trainable("tok_embed"));
  CHECK_FALSE(art.trainable("blocks.1.norm_attn_gain"));
  CHECK_FALSE(art.trainable("blocks.0.wq"));
  CHECK_FALSE(art.trainable("vision.queries"));
  CHECK_FALSE(art.trainable("unembed"));
  CHECK_THROWS_AS(art.trainable("blocks.9.wq"), std::out_of_range);
  CHECK(art.find("nope") == nullptr);

  const auto mini = build_policy(c, VisionConfig{}, Preset::kMiniGpt4);
  for (const auto& e : mini.entries())
    CHECK(e.trainable == (e.path == "projection.weight" || e.path == "projection.bias"));
}

TEST_CASE("single block: its attention norm is trainable") {
  ModelConfig c;
  c.n_blocks = 1;
  const auto p = build_policy(c, VisionConfig{}, Preset::kArtGpt4);
  CHECK(p.trainable("blocks.0.norm_attn_gain"));
}

TEST_CASE("policy covers every model parameter with matching shapes") {
  ModelConfig c;
  c.positional_mode = PositionalMode::kAbsolute;
  const VisionConfig v;
  const Model m = init_model(c, v, 1);
  const auto p = build_policy(c, v, Preset::kArtGpt4);
  const auto params = m.named_parameters();
  REQUIRE(params.size() == p.entries().size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(params[i].path == p.entries()[i].path);
    CHECK(params[i].tensor.shape() == p.entries()[i].shape);
    total += params[i].tensor.numel();
  }
  CHECK(total == p.total_count());
  CHECK(p.find("pos_embed") != nullptr);
}

TEST_CASE("apply_policy sets gradient flags") {
  ModelConfig c;
  const VisionConfig v;
  Model m = init_model(c, v, 1);
  const auto p = build_policy(c, v, Preset::kMiniGpt4);
  apply_policy(m, p);
  for (const auto& [path, t] : m.named_parameters()) CHECK(t.requires_grad() == p.trainable(path));

  ModelConfig other = c;
  other.n_blocks = 3;
  CHECK_THROWS_AS(apply_policy(m, build_policy(other, v, Preset::kMiniGpt4)),
                  std::invalid_argument);
}

TEST_CASE("frozen check") {
  RunConfig config = profile_defaults("toy");
  Model m = init_model(config.model, config.vision, 2);
  const auto p = build_policy(config.model, config.vision, Preset::kArtGpt4);
  const auto before = snapshot_weights(m);
  CHECK(assert_frozen_unchanged(before, snapshot_weights(m), p));

  GenerateOptions opt;
  opt.n_items = 12;
  const auto data = select_split(generate_dataset(opt).examples, Split::kStage1);
  Trainer t(m, p, config, Stage::kStage1);
  t.run(data, 10);
  const auto after = snapshot_weights(m);
  CHECK(assert_frozen_unchanged(before, after, p));
  CHECK(before.at("blocks.0.adapter.w_up") != after.at("blocks.0.adapter.w_up"));

  m.lm.blocks[1].wq.mutable_data()[3] += 1e-12;
  CHECK_FALSE(assert_frozen_unchanged(before, snapshot_weights(m), p));

  WeightSnapshot smaller = before;
  smaller.erase(smaller.begin());
  CHECK_THROWS_AS(assert_frozen_unchanged(before, smaller, p), std::invalid_argument);
}

TEST_CASE("renderings") {
  ModelConfig c;
  const auto p = build_policy(c, VisionConfig{}, Preset::kMiniGpt4);
  const auto table = render_policy_table(p);
  CHECK(table.find("trainable: 144") != std::string::npos);
  CHECK(table.find("preset: minigpt4") != std::string::npos);
  const auto j = nlohmann::json::parse(render_policy_json(p));
  CHECK(j["trainable"] == 144);
  CHECK(j["preset"] == "minigpt4");
  CHECK(j["parameters"].size() == p.entries().size());
  CHECK(preset_from_string("artgpt4") == Preset::kArtGpt4);
  CHECK_THROWS(preset_from_string("llava"));
}
