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

#include "ag4/tensor.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace ag4 {

namespace {

thread_local std::string fault_op;
thread_local double fault_factor = 1.0;

double fault_scale(const char* op) {
  return (!fault_op.empty() && fault_op == op) ? fault_factor : 1.0;
}

void require_2d(const Tensor& t, const char* op) {
  if (!t.defined() || t.dim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     (t.defined() ? shape_to_string(t.shape()) : "undefined"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

std::span<const double> out_grad(const TensorImpl& out) { return *out.grad; }

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 1.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("Tensor::from: shape " + shape_to_string(shape) +
                     " holds " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  require_2d(*this, "rows");
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d(*this, "cols");
  return impl_->shape[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_to_string(shape()) +
                     " is not a scalar");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) {
    throw std::logic_error("set_requires_grad: only leaves can change flag");
  }
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.reset();
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }
bool Tensor::has_grad() const { return impl_->grad.has_value(); }

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) throw std::logic_error("grad: tensor holds no gradient");
  return *impl_->grad;
}

void Tensor::clear_grad() { impl_->grad.reset(); }

Tensor Tensor::clone() const {
  return from(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> data,
                           const char* op, std::vector<Tensor> inputs,
                           std::function<void(const TensorImpl&)> backward) {
  Tensor out = from(std::move(shape), std::move(data), false);
  if (any_requires_grad(inputs)) {
    out.impl_->requires_grad = true;
    auto node = std::make_shared<TapeNode>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
  }
  return out;
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
  if (!t.requires_grad()) return;
  auto* impl = const_cast<TensorImpl*>(t.impl());
  if (!impl->grad) {
    impl->grad.emplace(delta.begin(), delta.end());
    return;
  }
  auto& g = *impl->grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

std::vector<Tensor> backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_to_string(loss.shape())
                                     : std::string("undefined")));
  }
  if (!loss.requires_grad()) return {};

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Tensor> order;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  visited.insert(loss.impl());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& node = t.impl()->node;
    if (node && next < node->inputs.size()) {
      const Tensor& in = node->inputs[next++];
      if (in.requires_grad() && visited.insert(in.impl()).second) {
        stack.emplace_back(in, 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  std::vector<double> seed{1.0};
  accumulate_grad(loss, seed);

  std::vector<Tensor> leaves;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor& t = *it;
    auto* impl = t.impl();
    if (!impl->node) {
      if (impl->grad) leaves.push_back(t);
      continue;
    }
    if (impl->grad) impl->node->backward(*impl);
    // Interior gradients are transient.
    impl->grad.reset();
  }
  std::reverse(leaves.begin(), leaves.end());
  return leaves;
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return Tensor::make_result(
      {m, n}, std::move(out), "matmul", {a, b},
      [a, b, m, k, n](const TensorImpl& o) {
        auto G = out_grad(o);
        if (a.requires_grad()) {
          // dA = G * B^T
          std::vector<double> da(m * k, 0.0);
          auto B = b.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                acc += G[i * n + j] * B[p * n + j];
              }
              da[i * k + p] = acc;
            }
          }
          accumulate_grad(a, da);
        }
        if (b.requires_grad()) {
          // dB = A^T * G
          std::vector<double> db(k * n, 0.0);
          auto A = a.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) {
                db[p * n + j] += av * G[i * n + j];
              }
            }
          }
          accumulate_grad(b, db);
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  }
  return Tensor::make_result({n, m}, std::move(out), "transpose", {a},
                             [a, m, n](const TensorImpl& o) {
                               auto G = out_grad(o);
                               std::vector<double> da(m * n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < n; ++j) {
                                   da[i * n + j] = G[j * m + i];
                                 }
                               }
                               accumulate_grad(a, da);
                             });
}

// ---- elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [a, b](const TensorImpl& o) {
                               accumulate_grad(a, out_grad(o));
                               accumulate_grad(b, out_grad(o));
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [a, b](const TensorImpl& o) {
                               accumulate_grad(a, out_grad(o));
                               if (b.requires_grad()) {
                                 std::vector<double> db(out_grad(o).begin(),
                                                        out_grad(o).end());
                                 for (auto& v : db) v = -v;
                                 accumulate_grad(b, db);
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return Tensor::make_result(
      a.shape(), std::move(out), "mul", {a, b}, [a, b](const TensorImpl& o) {
        auto G = out_grad(o);
        const std::size_t n = G.size();
        if (a.requires_grad()) {
          std::vector<double> da(n);
          auto B = b.data();
          for (std::size_t i = 0; i < n; ++i) da[i] = G[i] * B[i];
          accumulate_grad(a, da);
        }
        if (b.requires_grad()) {
          std::vector<double> db(n);
          auto A = a.data();
          for (std::size_t i = 0; i < n; ++i) db[i] = G[i] * A[i];
          accumulate_grad(b, db);
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), "scale", {a},
                             [a, factor](const TensorImpl& o) {
                               std::vector<double> da(out_grad(o).begin(),
                                                      out_grad(o).end());
                               for (auto& v : da) v *= factor;
                               accumulate_grad(a, da);
                             });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.dim() != 1 || bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) +
                     " does not match " + shape_to_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto Bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += Bv[j];
  }
  return Tensor::make_result({m, n}, std::move(out), "add_bias", {a, bias},
                             [a, bias, m, n](const TensorImpl& o) {
                               auto G = out_grad(o);
                               accumulate_grad(a, G);
                               if (bias.requires_grad()) {
                                 std::vector<double> db(n, 0.0);
                                 for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) {
                                     db[j] += G[i * n + j];
                                   }
                                 }
                                 accumulate_grad(bias, db);
                               }
                             });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({}, {total}, "sum", {a},
                             [a](const TensorImpl& o) {
                               std::vector<double> da(a.numel(),
                                                      out_grad(o)[0]);
                               accumulate_grad(a, da);
                             });
}

// ---- activations ------------------------------------------------------------------

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * normal_cdf(X[i]);
  return Tensor::make_result(
      x.shape(), std::move(out), "gelu", {x}, [x](const TensorImpl& o) {
        auto G = out_grad(o);
        auto X = x.data();
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi *
                                    std::numbers::sqrt2;
        const double fault = fault_scale("gelu");
        std::vector<double> dx(G.size());
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * X[i] * X[i]);
          dx[i] = G[i] * (normal_cdf(X[i]) + X[i] * pdf) * fault;
        }
        accumulate_grad(x, dx);
      });
}

namespace {
double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * sigmoid(X[i]);
  return Tensor::make_result(
      x.shape(), std::move(out), "silu", {x}, [x](const TensorImpl& o) {
        auto G = out_grad(o);
        auto X = x.data();
        const double fault = fault_scale("silu");
        std::vector<double> dx(G.size());
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double s = sigmoid(X[i]);
          dx[i] = G[i] * (s + X[i] * s * (1.0 - s)) * fault;
        }
        accumulate_grad(x, dx);
      });
}

// ---- normalization -------------------------------------------------------------------

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  if (!x.defined() || x.dim() == 0) throw ShapeError("rms_norm: empty input");
  const std::size_t n = x.shape().back();
  if (gain.dim() != 1 || gain.numel() != n) {
    throw ShapeError("rms_norm: gain " + shape_to_string(gain.shape()) +
                     " does not match last dimension of " +
                     shape_to_string(x.shape()));
  }
  if (!(eps >= 0.0)) throw std::invalid_argument("rms_norm: eps must be >= 0");
  const std::size_t m = x.numel() / n;
  auto X = x.data();
  auto Gn = gain.data();
  std::vector<double> inv_rms(m);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += X[r * n + j] * X[r * n + j];
    const double denom = std::sqrt(ss / static_cast<double>(n) + eps);
    // A zero row with eps = 0 stays zero.
    inv_rms[r] = denom > 0.0 ? 1.0 / denom : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = Gn[j] * X[r * n + j] * inv_rms[r];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), "rms_norm", {x, gain},
      [x, gain, m, n, inv_rms](const TensorImpl& o) {
        auto G = out_grad(o);
        auto X = x.data();
        auto Gn = gain.data();
        const double fault = fault_scale("rms_norm");
        if (x.requires_grad()) {
          std::vector<double> dx(m * n);
          for (std::size_t r = 0; r < m; ++r) {
            const double ir = inv_rms[r];
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dot += G[r * n + j] * Gn[j] * X[r * n + j];
            }
            const double c = ir * ir * ir * dot / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              dx[r * n + j] =
                  (ir * Gn[j] * G[r * n + j] - c * X[r * n + j]) * fault;
            }
          }
          accumulate_grad(x, dx);
        }
        if (gain.requires_grad()) {
          std::vector<double> dg(n, 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
              dg[j] += G[r * n + j] * X[r * n + j] * inv_rms[r];
            }
          }
          accumulate_grad(gain, dg);
        }
      });
}

Tensor softmax_rows(const Tensor& x, bool causal) {
  require_2d(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (causal && m > n) {
    throw ShapeError("softmax_rows: causal mask needs rows <= cols, got " +
                     shape_to_string(x.shape()));
  }
  auto X = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? i + 1 : n;
    double mx = X[i * n];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, X[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[i * n + j] = std::exp(X[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[i * n + j] /= z;
  }
  std::vector<double> probs = out;
  return Tensor::make_result(
      {m, n}, std::move(out), "softmax_rows", {x},
      [x, m, n, probs = std::move(probs)](const TensorImpl& o) {
        auto G = out_grad(o);
        const double fault = fault_scale("softmax_rows");
        std::vector<double> dx(m * n);
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dot += G[i * n + j] * probs[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            dx[i * n + j] = probs[i * n + j] * (G[i * n + j] - dot) * fault;
          }
        }
        accumulate_grad(x, dx);
      });
}

// ---- reshaping -------------------------------------------------------------------------

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin + count > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") exceeds " +
                     shape_to_string(x.shape()));
  }
  std::vector<double> out(m * count);
  auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      out[i * count + j] = X[i * n + begin + j];
    }
  }
  return Tensor::make_result({m, count}, std::move(out), "slice_cols", {x},
                             [x, m, n, begin, count](const TensorImpl& o) {
                               auto G = out_grad(o);
                               std::vector<double> dx(m * n, 0.0);
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < count; ++j) {
                                   dx[i * n + begin + j] = G[i * count + j];
                                 }
                               }
                               accumulate_grad(x, dx);
                             });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  for (const auto& p : parts) require_2d(p, "concat_cols");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto P = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * n + offset + j] = P[i * w + j];
    }
    offset += w;
  }
  return Tensor::make_result({m, n}, std::move(out), "concat_cols", parts,
                             [parts, m, n](const TensorImpl& o) {
                               auto G = out_grad(o);
                               std::size_t offset = 0;
                               for (const auto& p : parts) {
                                 const std::size_t w = p.cols();
                                 if (p.requires_grad()) {
                                   std::vector<double> dp(m * w);
                                   for (std::size_t i = 0; i < m; ++i) {
                                     for (std::size_t j = 0; j < w; ++j) {
                                       dp[i * w + j] = G[i * n + offset + j];
                                     }
                                   }
                                   accumulate_grad(p, dp);
                                 }
                                 offset += w;
                               }
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  for (const auto& p : parts) require_2d(p, "concat_rows");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column counts differ " +
                       shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result({m, n}, std::move(out), "concat_rows", parts,
                             [parts](const TensorImpl& o) {
                               auto G = out_grad(o);
                               std::size_t offset = 0;
                               for (const auto& p : parts) {
                                 accumulate_grad(p, G.subspan(offset, p.numel()));
                                 offset += p.numel();
                               }
                             });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d(table, "embedding");
  const std::size_t vocab = table.rows(), w = table.cols();
  std::vector<double> out(ids.size() * w);
  auto T = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(T.begin() + ids[i] * w, w, out.begin() + i * w);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return Tensor::make_result({ids.size(), w}, std::move(out), "embedding",
                             {table},
                             [table, saved, vocab, w](const TensorImpl& o) {
                               auto G = out_grad(o);
                               std::vector<double> dt(vocab * w, 0.0);
                               for (std::size_t i = 0; i < saved.size(); ++i) {
                                 for (std::size_t j = 0; j < w; ++j) {
                                   dt[saved[i] * w + j] += G[i * w + j];
                                 }
                               }
                               accumulate_grad(table, dt);
                             });
}

Tensor rotary(const Tensor& x, std::size_t n_heads, double base) {
  require_2d(x, "rotary");
  const std::size_t seq = x.rows(), hidden = x.cols();
  if (n_heads == 0 || hidden % n_heads != 0 || (hidden / n_heads) % 2 != 0) {
    throw ShapeError("rotary: hidden " + std::to_string(hidden) +
                     " must split into heads of even width");
  }
  const std::size_t head_dim = hidden / n_heads;
  const std::size_t half = head_dim / 2;
  std::vector<double> cosv(seq * half), sinv(seq * half);
  for (std::size_t p = 0; p < seq; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta =
          static_cast<double>(p) *
          std::pow(base, -2.0 * static_cast<double>(i) /
                             static_cast<double>(head_dim));
      cosv[p * half + i] = std::cos(theta);
      sinv[p * half + i] = std::sin(theta);
    }
  }
  auto X = x.data();
  std::vector<double> out(seq * hidden);
  for (std::size_t p = 0; p < seq; ++p) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < half; ++i) {
        const std::size_t a = p * hidden + h * head_dim + 2 * i;
        const double c = cosv[p * half + i], s = sinv[p * half + i];
        out[a] = X[a] * c - X[a + 1] * s;
        out[a + 1] = X[a] * s + X[a + 1] * c;
      }
    }
  }
  return Tensor::make_result(
      {seq, hidden}, std::move(out), "rotary", {x},
      [x, seq, hidden, n_heads, head_dim, half, cosv, sinv](
          const TensorImpl& o) {
        auto G = out_grad(o);
        std::vector<double> dx(seq * hidden);
        for (std::size_t p = 0; p < seq; ++p) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < half; ++i) {
              const std::size_t a = p * hidden + h * head_dim + 2 * i;
              const double c = cosv[p * half + i], s = sinv[p * half + i];
              dx[a] = G[a] * c + G[a + 1] * s;
              dx[a + 1] = -G[a] * s + G[a + 1] * c;
            }
          }
        }
        accumulate_grad(x, dx);
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_2d(logits, "cross_entropy");
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(m) + " rows");
  }
  std::size_t count = 0;
  for (int t : targets) {
    if (t >= static_cast<int>(v)) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                              " outside vocabulary of " + std::to_string(v));
    }
    if (t >= 0) ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: no targets");
  auto L = logits.data();
  std::vector<double> probs(m * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0) continue;
    double mx = L[i * v];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, L[i * v + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(L[i * v + j] - mx);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += (std::log(z) + mx) - L[i * v + targets[i]];
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  std::vector<int> saved(targets.begin(), targets.end());
  return Tensor::make_result(
      {}, {total * inv_count}, "cross_entropy", {logits},
      [logits, saved, probs = std::move(probs), m, v,
       inv_count](const TensorImpl& o) {
        const double g = out_grad(o)[0] * inv_count;
        std::vector<double> dl(m * v, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          if (saved[i] < 0) continue;
          for (std::size_t j = 0; j < v; ++j) dl[i * v + j] = g * probs[i * v + j];
          dl[i * v + saved[i]] -= g;
        }
        accumulate_grad(logits, dl);
      });
}

// ---- fault injection -----------------------------------------------------------------

ScopedBackwardFault::ScopedBackwardFault(std::string op, double factor)
    : previous_op_(std::move(fault_op)), previous_factor_(fault_factor) {
  fault_op = std::move(op);
  fault_factor = factor;
}

ScopedBackwardFault::~ScopedBackwardFault() {
  fault_op = std::move(previous_op_);
  fault_factor = previous_factor_;
}

}  // namespace ag4
