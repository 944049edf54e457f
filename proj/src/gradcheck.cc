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

#include "ag4/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "ag4/rng.h"
#include "ag4/trainer.h"

namespace ag4 {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::string> GradcheckResult::failing(double tol) const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    if (!(g.max_rel_error < tol)) out.push_back(g.path);
  }
  return out;
}

GradcheckResult gradient_check(Model& model, const ParamPolicy& policy,
                               const std::function<Tensor()>& loss_fn, double h) {
  auto params = model.named_parameters();
  for (auto& p : params) p.tensor.clear_grad();
  backward(loss_fn());

  GradcheckResult result;
  for (auto& [path, tensor] : params) {
    if (!policy.trainable(path)) continue;
    GroupError group{path, tensor.numel(), 0.0};
    std::vector<double> analytic(tensor.numel(), 0.0);
    if (tensor.has_grad()) {
      std::copy(tensor.grad().begin(), tensor.grad().end(), analytic.begin());
    }
    auto data = tensor.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double plus = loss_fn().item();
      data[i] = saved - h;
      const double minus = loss_fn().item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric);
      group.max_rel_error = std::max(group.max_rel_error, err);
    }
    result.scalars += tensor.numel();
    result.max_rel_error = std::max(result.max_rel_error, group.max_rel_error);
    result.groups.push_back(group);
    tensor.clear_grad();
  }
  return result;
}

Tensor GradcheckFixture::loss() const {
  Tensor total;
  for (const auto& ex : examples) {
    Tensor l = model_forward(model.lm, stage1_sequence(model, ex)).loss;
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(examples.size()));
}

GradcheckFixture make_gradcheck_fixture(const RunConfig& config, std::uint64_t seed,
                                        std::size_t batch) {
  Model model = init_model(config.model, config.vision, seed);
  ParamPolicy policy = build_policy(config.model, config.vision, config.preset);
  apply_policy(model, policy);

  Rng rng(mix_seed(seed, 77));
  for (auto& [path, tensor] : model.named_parameters()) {
    if (!policy.trainable(path)) continue;
    for (auto& v : tensor.mutable_data()) v += rng.uniform(-0.2, 0.2);
  }

  GenerateOptions gen;
  gen.seed = seed;
  gen.n_items = 2 * batch;
  gen.vocab_size = config.model.vocab_size;
  auto data = generate_dataset(gen);
  std::vector<Example> examples;
  for (auto& ex : data.examples) {
    if (ex.split == Split::kStage1 && examples.size() < batch) examples.push_back(ex);
  }
  return GradcheckFixture{std::move(model), std::move(policy), std::move(examples)};
}

}  // namespace ag4
