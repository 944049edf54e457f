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
#include <string>
#include <vector>

#include "ag4/tensor.h"

namespace ag4 {

struct VisionConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t vis_width = 8;
  std::size_t n_query = 4;

  void validate() const;
  std::size_t patches() const {
    const std::size_t side = image_size / patch_size;
    return side * side;
  }
  std::size_t patch_values() const { return patch_size * patch_size; }
};

struct SyntheticImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, values in [0, 1]
  int class_id = 0;
  int intensity_id = 0;
};

// Frozen stand-ins for the ViT patch encoder and the Q-Former.
struct VisionStub {
  Tensor patch_embed;  // [patch_values x vis_width]
  Tensor patch_bias;   // [vis_width]
  Tensor queries;      // [n_query x vis_width]
};

// The trainable vis_width -> hidden bridge.
struct VisualProjection {
  Tensor weight;  // [vis_width x hidden]
  Tensor bias;    // [hidden]
};

struct VisualTokens {
  Tensor tokens;  // [n_query x vis_width]
};

// Stub weights are seeded and never require gradients. The patch bias
// starts at zero.
VisionStub init_vision_stub(const VisionConfig& config, std::uint64_t seed);
VisualProjection init_projection(const VisionConfig& config, std::size_t hidden,
                                 std::uint64_t seed);

// Row p holds the flattened values of patch p (patches in raster order).
Tensor patchify(const SyntheticImage& img, const VisionConfig& config);

// [patches x vis_width] patch features.
Tensor encode_image(const SyntheticImage& img, const VisionStub& stub,
                    const VisionConfig& config);

// One cross-attention read: each query attends over all patch features.
VisualTokens qformer_stub(const Tensor& features, const VisionStub& stub);

// [n_query x hidden] prefix embeddings.
Tensor project_visual(const VisualTokens& vt, const VisualProjection& proj);

// Feature file: "AG4FEAT1", u32 rows, u32 cols, row-major little-endian f64.
void write_feature_file(const std::string& path, const Tensor& matrix);
Tensor read_feature_file(const std::string& path);
std::vector<std::uint8_t> encode_feature_bytes(const Tensor& matrix);
Tensor decode_feature_bytes(std::span<const std::uint8_t> bytes);

}  // namespace ag4
