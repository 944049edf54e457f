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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ag4 {

using Shape = std::vector<std::size_t>;

// Raised by every operation that receives inputs of the wrong shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;
struct TensorImpl;

// One recorded operation on the gradient tape. `backward` reads the output's
// gradient and accumulates into those inputs that require a gradient.
struct TapeNode {
  const char* op = "";
  std::vector<Tensor> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::shared_ptr<TapeNode> node;  // null for leaves
};

// Dense row-major float64 tensor. Copies share storage (handle semantics,
// like the tape itself); use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  // Only valid on leaves.
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  Tensor clone() const;   // deep copy, detached, same requires_grad flag
  Tensor detach() const;  // deep copy, detached, requires_grad = false

  const TensorImpl* impl() const { return impl_.get(); }
  TensorImpl* impl() { return impl_.get(); }

  // Builds a tape-recorded result. Used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> data,
                            const char* op, std::vector<Tensor> inputs,
                            std::function<void(const TensorImpl&)> backward);

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Adds `delta` into the gradient of `t` if it requires one.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

// Runs reverse-mode differentiation from a scalar loss. Returns the leaves
// that received a gradient, in the order they were reached.
std::vector<Tensor> backward(const Tensor& loss);

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a [m x n] + bias [n] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sum(const Tensor& a);

Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);

inline constexpr double kDefaultRmsEps = 1e-6;
Tensor rms_norm(const Tensor& x, const Tensor& gain,
                double eps = kDefaultRmsEps);

// Row-wise softmax. With `causal`, entry (i, j) for j > i is masked out.
Tensor softmax_rows(const Tensor& x, bool causal = false);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Gathers rows of `table` [vocab x width].
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Rotary position encoding applied per head on [seq x hidden].
Tensor rotary(const Tensor& x, std::size_t n_heads, double base = 10000.0);

// Mean next-token cross-entropy over rows whose target is >= 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// Standard normal CDF.
double normal_cdf(double x);

// Thread-local fault injection for backward rules, used as a negative
// control by gradient-check tooling. While active, the named op's backward
// scales the gradient it propagates by `factor`.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(std::string op, double factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;

 private:
  std::string previous_op_;
  double previous_factor_;
};

}  // namespace ag4
