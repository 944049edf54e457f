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
#include <string>
#include <vector>

#include "ag4/transformer.h"
#include "ag4/vision_bridge.h"

namespace ag4 {

// What a parameter is, independent of its path spelling.
enum class ParamKind {
  kTokenEmbedding,
  kPositionEmbedding,
  kAttentionNorm,
  kAttentionProjection,
  kAdapter,
  kMlpNorm,
  kMlp,
  kFinalNorm,
  kUnembedding,
  kVisionStub,
  kVisualProjection,
};

struct ParamSpec {
  std::string path;
  Shape shape;
  ParamKind kind;
  int block = -1;  // 0-based block index, -1 outside the stack
};

struct NamedTensor {
  std::string path;
  Tensor tensor;
};

// Language model, frozen vision stubs and the visual projection.
struct Model {
  LanguageModel lm;
  VisionConfig vision_config;
  VisionStub vision;
  VisualProjection projection;

  const ModelConfig& config() const { return lm.config; }

  // Handles to every parameter, in enumerate_params order.
  std::vector<NamedTensor> named_parameters() const;
  Model clone() const;
};

// Every parameter path the model owns, derived from configuration alone.
std::vector<ParamSpec> enumerate_params(const ModelConfig& config,
                                        const VisionConfig& vision);

Model init_model(const ModelConfig& config, const VisionConfig& vision,
                 std::uint64_t seed);

// Image -> patch features -> query tokens -> prefix embeddings.
Tensor visual_prefix(const Model& model, const SyntheticImage& img);

}  // namespace ag4
