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

// Reference implementations used only by tests. They share no code with the
// library: plain loops over std::vector, no tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ag4/tensor.h"

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

// Phi(x) by composite Simpson quadrature of the normal density from 0 to x.
inline double normal_cdf(double x, int intervals = 2000) {
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * kPi); };
  const double h = x / intervals;
  double s = pdf(0.0) + pdf(x);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
  return 0.5 + s * h / 3.0;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
  double total = 0.0;
  std::vector<double> e(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) total += e[i] = std::exp(row[i]);
  for (auto& v : e) v /= total;
  return e;
}

// Central difference of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& xi, double h) {
  const double saved = xi;
  xi = saved + h;
  const double up = f();
  xi = saved - h;
  const double down = f();
  xi = saved;
  return (up - down) / (2.0 * h);
}

// Largest relative error between the tape gradient of `loss_fn` and central
// differences for every scalar of `leaf`.
inline double max_grad_error(ag4::Tensor leaf, const std::function<ag4::Tensor()>& loss_fn,
                             double h = 1e-6) {
  leaf.clear_grad();
  ag4::backward(loss_fn());
  std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  leaf.clear_grad();
  auto data = leaf.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double numeric = central_difference([&] { return loss_fn().item(); }, data[i], h);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace oracle
