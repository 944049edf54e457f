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

#include "ag4/vision_bridge.h"

#include <cmath>
#include <stdexcept>

#include "ag4/binary_io.h"
#include "ag4/rng.h"

namespace ag4 {

namespace {

constexpr char kFeatureMagic[] = "AG4FEAT1";

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

void VisionConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("vision config: image_size must be a positive "
                                "multiple of patch_size");
  }
  if (vis_width == 0 || n_query == 0) {
    throw std::invalid_argument("vision config: vis_width and n_query must be positive");
  }
}

VisionStub init_vision_stub(const VisionConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.patch_values()));
  VisionStub stub;
  stub.patch_embed = uniform({config.patch_values(), config.vis_width}, bound, rng);
  stub.patch_bias = Tensor::zeros({config.vis_width});
  stub.queries = uniform({config.n_query, config.vis_width}, 1.0, rng);
  return stub;
}

VisualProjection init_projection(const VisionConfig& config, std::size_t hidden,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.vis_width));
  return VisualProjection{
      .weight = uniform({config.vis_width, hidden}, bound, rng),
      .bias = Tensor::zeros({hidden}),
  };
}

Tensor patchify(const SyntheticImage& img, const VisionConfig& config) {
  if (img.height != config.image_size || img.width != config.image_size ||
      img.pixels.size() != img.height * img.width) {
    throw ShapeError("encode_image: expected a " +
                     std::to_string(config.image_size) + "x" +
                     std::to_string(config.image_size) + " pixel grid, got " +
                     std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " with " + std::to_string(img.pixels.size()) + " values");
  }
  const std::size_t p = config.patch_size;
  const std::size_t side = config.image_size / p;
  std::vector<double> out;
  out.reserve(config.patches() * config.patch_values());
  for (std::size_t pr = 0; pr < side; ++pr) {
    for (std::size_t pc = 0; pc < side; ++pc) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
          out.push_back(img.pixels[(pr * p + r) * img.width + pc * p + c]);
        }
      }
    }
  }
  return Tensor::from({config.patches(), config.patch_values()}, std::move(out));
}

Tensor encode_image(const SyntheticImage& img, const VisionStub& stub,
                    const VisionConfig& config) {
  return add_bias(matmul(patchify(img, config), stub.patch_embed), stub.patch_bias);
}

VisualTokens qformer_stub(const Tensor& features, const VisionStub& stub) {
  if (features.dim() != 2 || features.cols() != stub.queries.cols()) {
    throw ShapeError("qformer_stub: features " + shape_to_string(features.shape()) +
                     " do not match query width " +
                     std::to_string(stub.queries.cols()));
  }
  const double inv_sqrt_w =
      1.0 / std::sqrt(static_cast<double>(features.cols()));
  Tensor scores = scale(matmul(stub.queries, transpose(features)), inv_sqrt_w);
  return VisualTokens{matmul(softmax_rows(scores), features)};
}

Tensor project_visual(const VisualTokens& vt, const VisualProjection& proj) {
  if (vt.tokens.dim() != 2 || proj.weight.dim() != 2 ||
      vt.tokens.cols() != proj.weight.rows()) {
    throw ShapeError("project_visual: tokens " + shape_to_string(vt.tokens.shape()) +
                     " do not match projection " +
                     shape_to_string(proj.weight.shape()));
  }
  return add_bias(matmul(vt.tokens, proj.weight), proj.bias);
}

std::vector<std::uint8_t> encode_feature_bytes(const Tensor& matrix) {
  if (matrix.dim() != 2) {
    throw ShapeError("feature file: expected a matrix, got " +
                     shape_to_string(matrix.shape()));
  }
  ByteWriter w;
  w.text({kFeatureMagic, 8});
  w.u32(static_cast<std::uint32_t>(matrix.rows()));
  w.u32(static_cast<std::uint32_t>(matrix.cols()));
  for (double v : matrix.data()) w.f64(v);
  return w.take();
}

Tensor decode_feature_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(8, "magic") != std::string_view(kFeatureMagic, 8)) {
    throw FormatError("feature file: bad magic");
  }
  const std::size_t rows = r.u32("dims");
  const std::size_t cols = r.u32("dims");
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = r.f64("data");
  if (r.remaining() != 0) {
    throw FormatError("feature file: " + std::to_string(r.remaining()) +
                      " trailing bytes after data");
  }
  return Tensor::from({rows, cols}, std::move(data));
}

void write_feature_file(const std::string& path, const Tensor& matrix) {
  write_file_bytes(path, encode_feature_bytes(matrix));
}

Tensor read_feature_file(const std::string& path) {
  try {
    return decode_feature_bytes(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace ag4
