// Copyright 2026 The hamalign Authors. All Rights Reserved.
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

// Elementwise, reduction and shape primitives. Broadcasting is limited to
// scalar-vs-tensor and Cx1x1-vs-CxHxW.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hamalign/tensor.hpp"

namespace hamalign {

namespace detail {

inline detail::Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

inline bool wants_grad(const Node& n) { return n.requires_grad; }

// Maps an output element index to an operand element index.
struct Broadcast {
  enum class Kind { same, scalar, channel };
  Kind kind = Kind::same;
  std::size_t inner = 1;

  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Kind::same: return i;
      case Kind::scalar: return 0;
      case Kind::channel: return i / inner;
    }
    return i;
  }
};

struct BroadcastPlan {
  Shape out;
  Broadcast a, b;
};

inline bool is_channel_vector_of(const Shape& small, const Shape& big) {
  return small.size() == 3 && big.size() == 3 && small[0] == big[0] && small[1] == 1 &&
         small[2] == 1;
}

inline BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return {a, {}, {}};
  const std::size_t na = shape_size(a), nb = shape_size(b);
  if (nb == 1) return {a, {}, {Broadcast::Kind::scalar, 1}};
  if (na == 1) return {b, {Broadcast::Kind::scalar, 1}, {}};
  if (is_channel_vector_of(b, a)) return {a, {}, {Broadcast::Kind::channel, a[1] * a[2]}};
  if (is_channel_vector_of(a, b)) return {b, {Broadcast::Kind::channel, b[1] * b[2]}, {}};
  throw_dims(op, a, b);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  const auto plan = detail::plan_broadcast("add", a.shape(), b.shape());
  const std::size_t n = shape_size(plan.out);
  std::vector<double> out(n);
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[plan.a(i)] + db[plan.b(i)];
  return make_result("add", plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
    auto& x = detail::input(self, 0);
    auto& y = detail::input(self, 1);
    const std::size_t n = self.data.size();
    if (x.requires_grad) {
      double* gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[plan.a(i)] += self.grad[i];
    }
    if (y.requires_grad) {
      double* gy = y.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gy[plan.b(i)] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const auto plan = detail::plan_broadcast("sub", a.shape(), b.shape());
  const std::size_t n = shape_size(plan.out);
  std::vector<double> out(n);
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[plan.a(i)] - db[plan.b(i)];
  return make_result("sub", plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
    auto& x = detail::input(self, 0);
    auto& y = detail::input(self, 1);
    const std::size_t n = self.data.size();
    if (x.requires_grad) {
      double* gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[plan.a(i)] += self.grad[i];
    }
    if (y.requires_grad) {
      double* gy = y.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gy[plan.b(i)] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  const auto plan = detail::plan_broadcast("mul", a.shape(), b.shape());
  const std::size_t n = shape_size(plan.out);
  std::vector<double> out(n);
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[plan.a(i)] * db[plan.b(i)];
  return make_result("mul", plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
    auto& x = detail::input(self, 0);
    auto& y = detail::input(self, 1);
    const std::size_t n = self.data.size();
    if (x.requires_grad) {
      double* gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[plan.a(i)] += self.grad[i] * y.data[plan.b(i)];
    }
    if (y.requires_grad) {
      double* gy = y.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gy[plan.b(i)] += self.grad[i] * x.data[plan.a(i)];
    }
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += offset;
  return make_result("add_scalar", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

/// Sum of equally shaped tensors.
inline Tensor add_n(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw UsageError("add_n: no terms");
  std::vector<double> out(terms[0].data().begin(), terms[0].data().end());
  for (std::size_t t = 1; t < terms.size(); ++t) {
    if (terms[t].shape() != terms[0].shape()) throw_dims("add_n", terms[0].shape(), terms[t].shape());
    const auto d = terms[t].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
  }
  return make_result("add_n", terms[0].shape(), std::move(out), terms, [](detail::Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      double* g = in->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto d = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split by sign so exp never overflows.
    const double v = d[i];
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result("sigmoid", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.data[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

inline Tensor log(const Tensor& a) {
  const auto d = a.data();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw DomainError("log: non-positive value " + std::to_string(d[i]) + " at index " +
                        std::to_string(i));
    }
    out[i] = std::log(d[i]);
  }
  return make_result("log", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] / x.data[i];
  });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = v > 0 ? v : slope * v;
  if (auto* log = detail::active_branch_log()) {
    for (double v : a.data()) log->add(v > 0);
  }
  return make_result("leaky_relu", a.shape(), std::move(out), {a}, [slope](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gx[i] += self.grad[i] * (x.data[i] > 0 ? 1.0 : slope);
    }
  });
}

inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

inline Tensor abs(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = std::fabs(v);
  if (auto* log = detail::active_branch_log()) {
    for (double v : a.data()) log->add(v > 0 ? 2 : (v < 0 ? 1 : 0));
  }
  return make_result("abs", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = x.data[i];
      gx[i] += self.grad[i] * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
    }
  });
}

/// Clamps into [lo, hi]; elements outside the interval receive no gradient.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = std::min(hi, std::max(lo, v));
  if (auto* log = detail::active_branch_log()) {
    for (double v : a.data()) log->add(v < lo ? 0 : (v > hi ? 2 : 1));
  }
  return make_result("clamp", a.shape(), std::move(out), {a}, [lo, hi](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x.data[i] >= lo && x.data[i] <= hi) gx[i] += self.grad[i];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < x.data.size(); ++i) gx[i] += g;
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw_dims("reshape", a.shape(), shape);
  return make_result("reshape", std::move(shape), a.values(), {a}, [](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  const auto d = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// out[m x n] += a[m x k] * b[k x n]
inline void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                     std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(out, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// out[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* out, std::size_t m,
                        std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(out, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

// out[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn_acc(const double* a, const double* b, double* out, std::size_t m,
                        std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MutMap(out, K, N).noalias() += ConstMap(a, M, K).transpose() * ConstMap(b, M, N);
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw_dims("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& x = detail::input(self, 0);
    auto& y = detail::input(self, 1);
    // dA = G B^T, dB = A^T G
    if (x.requires_grad) detail::gemm_nt_acc(self.grad.data(), y.data.data(), x.grad_buffer(), m, n, k);
    if (y.requires_grad) detail::gemm_tn_acc(x.data.data(), self.grad.data(), y.grad_buffer(), m, k, n);
  });
}

/// Affine map x W^T + b. `x` is a vector [in] or a row batch [T x in];
/// `weight` is [out x in]; `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  if (weight.rank() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_str(weight.shape()));
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const bool vector_input = x.rank() == 1;
  if ((vector_input && x.dim(0) != in_dim) || (!vector_input && (x.rank() != 2 || x.dim(1) != in_dim))) {
    throw_dims("linear", x.shape(), weight.shape());
  }
  if (bias.defined() && bias.size() != out_dim) throw_dims("linear", weight.shape(), bias.shape());
  const std::size_t rows = vector_input ? 1 : x.dim(0);
  std::vector<double> out(rows * out_dim, 0.0);
  detail::gemm_nt_acc(x.data().data(), weight.data().data(), out.data(), rows, in_dim, out_dim);
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bd[o];
  }
  Shape shape = vector_input ? Shape{out_dim} : Shape{rows, out_dim};
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", std::move(shape), std::move(out), std::move(inputs),
                     [rows, in_dim, out_dim](detail::Node& self) {
                       auto& xin = detail::input(self, 0);
                       auto& w = detail::input(self, 1);
                       const double* g = self.grad.data();
                       // dX = G W, dW = G^T X, db = colsum G
                       if (xin.requires_grad) detail::gemm_acc(g, w.data.data(), xin.grad_buffer(), rows, out_dim, in_dim);
                       if (w.requires_grad) detail::gemm_tn_acc(g, xin.data.data(), w.grad_buffer(), rows, out_dim, in_dim);
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         double* gb = self.inputs[2]->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
                       }
                     });
}

/// Concatenation along axis 0 (channels for CxHxW maps, rows for matrices).
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat: no parts");
  Shape shape = parts[0].shape();
  std::size_t lead = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw_dims("concat", parts[0].shape(), p.shape());
    }
    lead += p.dim(0);
  }
  shape[0] = lead;
  std::vector<double> out;
  out.reserve(shape_size(shape));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result("concat", std::move(shape), std::move(out), parts, [](detail::Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->data.size();
      if (in->requires_grad) {
        double* g = in->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

/// Rows/channels [begin, end) along axis 0.
inline Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.dim(0)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(a.shape()));
  }
  const std::size_t stride = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  const std::size_t offset = begin * stride;
  return make_result("slice", std::move(shape), std::move(out), {a}, [offset](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer() + offset;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

/// Splits axis 0 into `parts` equal contiguous pieces.
inline std::vector<Tensor> split(const Tensor& a, std::size_t parts) {
  if (parts == 0 || a.dim(0) % parts != 0) {
    throw ConfigError("split: " + std::to_string(a.dim(0)) + " channels not divisible into " +
                      std::to_string(parts) + " parts");
  }
  const std::size_t step = a.dim(0) / parts;
  std::vector<Tensor> out;
  out.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) out.push_back(slice(a, p * step, (p + 1) * step));
  return out;
}

/// Gathers rows/channels along axis 0: out[o] = a[perm[o]].
inline Tensor permute_channels(const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t c = a.dim(0);
  if (perm.size() != c) {
    throw DimensionError("permute_channels: permutation of length " + std::to_string(perm.size()) +
                         " for " + shape_str(a.shape()));
  }
  const std::size_t stride = a.size() / c;
  std::vector<double> out(a.size());
  const auto d = a.data();
  for (std::size_t o = 0; o < c; ++o) {
    if (perm[o] >= c) throw DimensionError("permute_channels: index out of range");
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(perm[o] * stride), stride,
                out.begin() + static_cast<std::ptrdiff_t>(o * stride));
  }
  return make_result("permute_channels", a.shape(), std::move(out), {a},
                     [perm, stride](detail::Node& self) {
                       auto& x = detail::input(self, 0);
                       double* gx = x.grad_buffer();
                       for (std::size_t o = 0; o < perm.size(); ++o)
                         for (std::size_t i = 0; i < stride; ++i) gx[perm[o] * stride + i] += self.grad[o * stride + i];
                     });
}

/// out[n] = a[n, indices[n]] for a row matrix a.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
  if (a.rank() != 2 || indices.size() != a.dim(0)) {
    throw DimensionError("gather_rows: " + std::to_string(indices.size()) + " indices for " +
                         shape_str(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  std::vector<double> out(indices.size());
  for (std::size_t n = 0; n < indices.size(); ++n) {
    if (indices[n] >= cols) throw DimensionError("gather_rows: column index out of range");
    out[n] = a.data()[n * cols + indices[n]];
  }
  return make_result("gather_rows", {indices.size()}, std::move(out), {a},
                     [indices, cols](detail::Node& self) {
                       auto& x = detail::input(self, 0);
                       double* gx = x.grad_buffer();
                       for (std::size_t n = 0; n < indices.size(); ++n) gx[n * cols + indices[n]] += self.grad[n];
                     });
}

namespace detail {

struct AxisLayout {
  std::size_t outer, len, inner;
};

inline AxisLayout axis_layout(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(shape));
  }
  AxisLayout l{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace detail

/// Softmax along `axis`, stabilised by subtracting the per-slice maximum.
inline Tensor softmax_axis(const Tensor& a, std::size_t axis) {
  const auto l = detail::axis_layout("softmax_axis", a.shape(), axis);
  const auto d = a.data();
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = d[base];
      for (std::size_t k = 1; k < l.len; ++k) mx = std::max(mx, d[base + k * l.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const double e = std::exp(d[base + k * l.inner] - mx);
        out[base + k * l.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) out[base + k * l.inner] /= z;
    }
  }
  return make_result("softmax_axis", a.shape(), std::move(out), {a}, [l](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    const double* y = self.data.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) dot += g[base + k * l.inner] * y[base + k * l.inner];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t idx = base + k * l.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

inline Tensor log_softmax_axis(const Tensor& a, std::size_t axis) {
  const auto l = detail::axis_layout("log_softmax_axis", a.shape(), axis);
  const auto d = a.data();
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = d[base];
      for (std::size_t k = 1; k < l.len; ++k) mx = std::max(mx, d[base + k * l.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) z += std::exp(d[base + k * l.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t k = 0; k < l.len; ++k) out[base + k * l.inner] = d[base + k * l.inner] - lz;
    }
  }
  return make_result("log_softmax_axis", a.shape(), std::move(out), {a}, [l](detail::Node& self) {
    auto& x = detail::input(self, 0);
    double* gx = x.grad_buffer();
    const double* y = self.data.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double gs = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) gs += g[base + k * l.inner];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t idx = base + k * l.inner;
          gx[idx] += g[idx] - std::exp(y[idx]) * gs;
        }
      }
    }
  });
}

}  // namespace hamalign
