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

#include "ag4/adapter.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ag4 {

namespace {

std::size_t bottleneck_for(std::size_t hidden, std::size_t divisor) {
  if (hidden == 0 || divisor == 0 || hidden % divisor != 0) {
    throw std::invalid_argument("adapter: hidden size " +
                                std::to_string(hidden) +
                                " is not a positive multiple of " +
                                std::to_string(divisor));
  }
  return hidden / divisor;
}

}  // namespace

AdapterWeights init_adapter(std::size_t hidden, Rng& rng, std::size_t divisor) {
  const std::size_t inner = bottleneck_for(hidden, divisor);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::vector<double> down(hidden * inner);
  for (auto& v : down) v = rng.uniform(-bound, bound);
  return AdapterWeights{
      .w_down = Tensor::from({hidden, inner}, std::move(down)),
      .b_down = Tensor::zeros({inner}),
      .w_up = Tensor::zeros({inner, hidden}),
      .b_up = Tensor::zeros({hidden}),
  };
}

void check_adapter(const AdapterWeights& w) {
  if (!w.w_down.defined() || w.w_down.dim() != 2) {
    throw ShapeError("adapter: w_down must be a matrix");
  }
  const std::size_t hidden = w.hidden(), inner = w.bottleneck();
  if (w.b_down.shape() != Shape{inner} || w.w_up.shape() != Shape{inner, hidden} ||
      w.b_up.shape() != Shape{hidden}) {
    throw ShapeError("adapter: inconsistent weights, w_down " +
                     shape_to_string(w.w_down.shape()) + ", b_down " +
                     shape_to_string(w.b_down.shape()) + ", w_up " +
                     shape_to_string(w.w_up.shape()) + ", b_up " +
                     shape_to_string(w.b_up.shape()));
  }
}

Tensor adapter_forward(const Tensor& x, const AdapterWeights& w) {
  check_adapter(w);
  if (x.dim() != 2 || x.cols() != w.hidden()) {
    throw ShapeError("adapter_forward: input " + shape_to_string(x.shape()) +
                     " does not match hidden size " +
                     std::to_string(w.hidden()));
  }
  Tensor down = add_bias(matmul(x, w.w_down), w.b_down);
  Tensor up = add_bias(matmul(gelu(down), w.w_up), w.b_up);
  return add(up, x);
}

std::int64_t adapter_param_count(std::int64_t hidden, std::int64_t divisor) {
  if (hidden <= 0 || divisor <= 0 || hidden % divisor != 0) {
    throw std::invalid_argument("adapter_param_count: hidden size " +
                                std::to_string(hidden) +
                                " is not a positive multiple of " +
                                std::to_string(divisor));
  }
  const std::int64_t inner = hidden / divisor;
  return hidden * inner + inner + inner * hidden + hidden;
}

}  // namespace ag4
