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

#include "ag4/model.h"

#include "ag4/rng.h"

namespace ag4 {

namespace {

// Visits (spec, tensor) for every parameter. `Fn` receives a Tensor& so the
// same walk serves enumeration and cloning.
template <typename ModelT, typename Fn>
void visit_params(ModelT& m, Fn&& fn) {
  const ModelConfig& c = m.lm.config;
  auto& lm = m.lm;
  fn(ParamSpec{"tok_embed", {c.vocab_size, c.hidden}, ParamKind::kTokenEmbedding}, lm.tok_embed);
  if (c.positional_mode == PositionalMode::kAbsolute) {
    fn(ParamSpec{"pos_embed", {c.max_seq, c.hidden}, ParamKind::kPositionEmbedding}, lm.pos_embed);
  }
  for (std::size_t b = 0; b < lm.blocks.size(); ++b) {
    auto& blk = lm.blocks[b];
    const std::string p = "blocks." + std::to_string(b) + ".";
    const int bi = static_cast<int>(b);
    const std::size_t h = c.hidden, f = c.mlp_inner;
    fn(ParamSpec{p + "norm_attn_gain", {h}, ParamKind::kAttentionNorm, bi}, blk.norm_attn_gain);
    fn(ParamSpec{p + "wq", {h, h}, ParamKind::kAttentionProjection, bi}, blk.wq);
    fn(ParamSpec{p + "wk", {h, h}, ParamKind::kAttentionProjection, bi}, blk.wk);
    fn(ParamSpec{p + "wv", {h, h}, ParamKind::kAttentionProjection, bi}, blk.wv);
    fn(ParamSpec{p + "wo", {h, h}, ParamKind::kAttentionProjection, bi}, blk.wo);
    if (c.adapters_enabled) {
      auto& a = *blk.adapter;
      const std::size_t r = h / c.bottleneck_divisor;
      fn(ParamSpec{p + "adapter.w_down", {h, r}, ParamKind::kAdapter, bi}, a.w_down);
      fn(ParamSpec{p + "adapter.b_down", {r}, ParamKind::kAdapter, bi}, a.b_down);
      fn(ParamSpec{p + "adapter.w_up", {r, h}, ParamKind::kAdapter, bi}, a.w_up);
      fn(ParamSpec{p + "adapter.b_up", {h}, ParamKind::kAdapter, bi}, a.b_up);
    }
    fn(ParamSpec{p + "norm_mlp_gain", {h}, ParamKind::kMlpNorm, bi}, blk.norm_mlp_gain);
    fn(ParamSpec{p + "w_gate", {h, f}, ParamKind::kMlp, bi}, blk.w_gate);
    fn(ParamSpec{p + "w_up_mlp", {h, f}, ParamKind::kMlp, bi}, blk.w_up_mlp);
    fn(ParamSpec{p + "w_down_mlp", {f, h}, ParamKind::kMlp, bi}, blk.w_down_mlp);
  }
  fn(ParamSpec{"final_norm_gain", {c.hidden}, ParamKind::kFinalNorm}, lm.final_norm_gain);
  fn(ParamSpec{"unembed", {c.hidden, c.vocab_size}, ParamKind::kUnembedding}, lm.unembed);

  const VisionConfig& v = m.vision_config;
  fn(ParamSpec{"vision.patch_embed", {v.patch_values(), v.vis_width}, ParamKind::kVisionStub},
     m.vision.patch_embed);
  fn(ParamSpec{"vision.patch_bias", {v.vis_width}, ParamKind::kVisionStub}, m.vision.patch_bias);
  fn(ParamSpec{"vision.queries", {v.n_query, v.vis_width}, ParamKind::kVisionStub},
     m.vision.queries);
  fn(ParamSpec{"projection.weight", {v.vis_width, c.hidden}, ParamKind::kVisualProjection},
     m.projection.weight);
  fn(ParamSpec{"projection.bias", {c.hidden}, ParamKind::kVisualProjection}, m.projection.bias);
}

// Shape-only stand-in used to enumerate without allocating weights.
Model skeleton(const ModelConfig& config, const VisionConfig& vision) {
  Model m;
  m.lm.config = config;
  m.vision_config = vision;
  m.lm.blocks.resize(config.n_blocks);
  if (config.adapters_enabled) {
    for (auto& b : m.lm.blocks) b.adapter.emplace();
  }
  return m;
}

}  // namespace

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  visit_params(*this, [&](const ParamSpec& spec, const Tensor& t) {
    out.push_back({spec.path, t});
  });
  return out;
}

Model Model::clone() const {
  Model copy = *this;
  visit_params(copy, [](const ParamSpec&, Tensor& t) { t = t.clone(); });
  return copy;
}

std::vector<ParamSpec> enumerate_params(const ModelConfig& config,
                                        const VisionConfig& vision) {
  config.validate();
  vision.validate();
  std::vector<ParamSpec> specs;
  Model m = skeleton(config, vision);
  visit_params(m, [&](const ParamSpec& spec, Tensor&) { specs.push_back(spec); });
  return specs;
}

Model init_model(const ModelConfig& config, const VisionConfig& vision,
                 std::uint64_t seed) {
  config.validate();
  vision.validate();
  Model m;
  m.lm = init_language_model(config, mix_seed(seed, 1));
  m.vision_config = vision;
  m.vision = init_vision_stub(vision, mix_seed(seed, 2));
  m.projection = init_projection(vision, config.hidden, mix_seed(seed, 3));
  return m;
}

Tensor visual_prefix(const Model& model, const SyntheticImage& img) {
  Tensor features = encode_image(img, model.vision, model.vision_config);
  return project_visual(qformer_stub(features, model.vision), model.projection);
}

}  // namespace ag4
