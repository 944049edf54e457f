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
#include <functional>
#include <string>
#include <vector>

#include "ag4/config.h"
#include "ag4/freeze_policy.h"
#include "ag4/model.h"
#include "ag4/synth_data.h"

namespace ag4 {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
// Denominator floor of the relative error, so that gradients which are zero
// up to finite-difference noise do not register as failures.
inline constexpr double kRelativeErrorFloor = 1e-6;

double relative_error(double analytic, double numeric);

struct GroupError {
  std::string path;
  std::size_t count = 0;
  double max_rel_error = 0.0;
};

struct GradcheckResult {
  std::vector<GroupError> groups;  // one per trainable parameter tensor
  std::size_t scalars = 0;
  double max_rel_error = 0.0;

  std::vector<std::string> failing(double tol) const;
};

// Compares the tape gradient of `loss_fn` against central differences for
// every scalar of every trainable parameter. `apply_policy` must already
// have been called on the model.
GradcheckResult gradient_check(Model& model, const ParamPolicy& policy,
                               const std::function<Tensor()>& loss_fn,
                               double h = kGradcheckStep);

// Reference setup: a model built from `config`, trainable parameters moved
// off their initial values (so the zero adapter up path does not hide
// gradients), and a stage-1 loss over `batch` generated pairs.
struct GradcheckFixture {
  Model model;
  ParamPolicy policy;
  std::vector<Example> examples;

  Tensor loss() const;
};

GradcheckFixture make_gradcheck_fixture(const RunConfig& config, std::uint64_t seed,
                                        std::size_t batch = 4);

}  // namespace ag4
