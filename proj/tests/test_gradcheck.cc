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
#include "doctest.h"

using namespace ag4;

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-3));
}

TEST_CASE("reference toy config passes for every trainable scalar") {
  const RunConfig config = profile_defaults("toy");
  auto fx = make_gradcheck_fixture(config, 0);
  CHECK(fx.examples.size() == 4);
  const auto r = gradient_check(fx.model, fx.policy, [&] { return fx.loss(); });
  CHECK(r.scalars == 488);
  CHECK(r.groups.size() == 2 * 5 + 1 + 2);
  CHECK(r.max_rel_error < kGradcheckTolerance);
  CHECK(r.failing(kGradcheckTolerance).empty());
  CHECK_FALSE(r.failing(1e-12).empty());
}

TEST_CASE("absolute positions and the minigpt4 preset also pass") {
  RunConfig config = profile_defaults("toy");
  config.model.positional_mode = PositionalMode::kAbsolute;
  auto fx = make_gradcheck_fixture(config, 3);
  CHECK(gradient_check(fx.model, fx.policy, [&] { return fx.loss(); }).max_rel_error < 1e-4);
  config.preset = Preset::kMiniGpt4;
  auto mini = make_gradcheck_fixture(config, 3);
  const auto r = gradient_check(mini.model, mini.policy, [&] { return mini.loss(); });
  CHECK(r.scalars == 144);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("a corrupted backward rule is caught") {
  const RunConfig config = profile_defaults("toy");
  for (const char* op : {"gelu", "silu", "rms_norm", "softmax_rows"}) {
    auto fx = make_gradcheck_fixture(config, 0);
    ScopedBackwardFault fault(op, 1.5);
    const auto r = gradient_check(fx.model, fx.policy, [&] { return fx.loss(); });
    INFO(op);
    CHECK_FALSE(r.failing(kGradcheckTolerance).empty());
  }
}

TEST_CASE("the check leaves parameters as it found them") {
  const RunConfig config = profile_defaults("toy");
  auto fx = make_gradcheck_fixture(config, 1);
  const auto before = snapshot_weights(fx.model);
  gradient_check(fx.model, fx.policy, [&] { return fx.loss(); });
  CHECK(snapshot_weights(fx.model) == before);
}
