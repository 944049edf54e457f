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

#include "ag4/rng.h"
#include "ag4/tensor.h"

namespace ag4 {

inline constexpr std::size_t kBottleneckDivisor = 4;

// Bottleneck adapter: down-projection to hidden / divisor, GELU,
// up-projection, residual add.
struct AdapterWeights {
  Tensor w_down;  // [hidden x bottleneck]
  Tensor b_down;  // [bottleneck]
  Tensor w_up;    // [bottleneck x hidden]
  Tensor b_up;    // [hidden]

  std::size_t hidden() const { return w_down.rows(); }
  std::size_t bottleneck() const { return w_down.cols(); }
  std::size_t param_count() const {
    return w_down.numel() + b_down.numel() + w_up.numel() + b_up.numel();
  }
};

// w_down ~ U(-1/sqrt(hidden), 1/sqrt(hidden)); every other field zero, so
// the adapter is the identity map until trained.
AdapterWeights init_adapter(std::size_t hidden, Rng& rng,
                            std::size_t divisor = kBottleneckDivisor);

// Validates shape relations; throws ShapeError.
void check_adapter(const AdapterWeights& w);

// y = up(gelu(down(x))) + x for x [seq x hidden].
Tensor adapter_forward(const Tensor& x, const AdapterWeights& w);

// Scalars in one adapter of the given hidden size. Throws
// std::invalid_argument unless hidden is positive and divisible by divisor.
std::int64_t adapter_param_count(std::int64_t hidden,
                                 std::int64_t divisor = kBottleneckDivisor);

}  // namespace ag4
