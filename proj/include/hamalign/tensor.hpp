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

// Define-by-run reverse-mode differentiation over dense f64 arrays.
//
// A Tensor is a shared handle to a graph node. Every operation producing a
// Tensor appends a node that remembers its inputs and a backward rule; the
// graph is rebuilt on each forward pass and lives as long as some handle to
// its output does.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hamalign/error.hpp"

namespace hamalign {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }

  double* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline bool& recording_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

/// Running hash of the branches taken by piecewise operations (which side
/// of a kink each element lies on, which assignment a matcher chose).
/// Inactive unless a BranchScope is open on the current thread.
class BranchLog {
 public:
  void add(std::uint64_t v) { hash_ = (hash_ ^ v) * 0x100000001B3ULL; }
  std::uint64_t hash() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

inline BranchLog*& active_branch_log() {
  thread_local BranchLog* log = nullptr;
  return log;
}

}  // namespace detail

/// Collects the branch hash of everything evaluated in its lifetime.
class BranchScope {
 public:
  BranchScope() : previous_(detail::active_branch_log()) { detail::active_branch_log() = &log_; }
  ~BranchScope() { detail::active_branch_log() = previous_; }
  BranchScope(const BranchScope&) = delete;
  BranchScope& operator=(const BranchScope&) = delete;

  std::uint64_t hash() const { return log_.hash(); }

 private:
  detail::BranchLog log_;
  detail::BranchLog* previous_;
};

/// Suspends graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::recording_disabled()) { detail::recording_disabled() = true; }
  ~NoGradGuard() { detail::recording_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape.empty()) shape = {1};
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_str(shape));
    }
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->id = detail::next_node_id();
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }
  std::string_view op() const { return node_->op; }

  std::span<const double> data() const { return node_->data; }
  /// Raw write access; intended for parameter updates and finite-difference probes.
  std::span<double> mutable_data() { return node_->data; }
  std::vector<double> values() const { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  double item() const {
    if (size() != 1) throw UsageError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->data[0];
  }

  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return node_->data[(c * dim(1) + i) * dim(2) + j];
  }

  /// Copy of the values as a fresh leaf detached from any graph.
  Tensor detach(bool requires_grad = false) const { return from(shape(), values(), requires_grad); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(std::string_view, Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Appends an operation node. The backward rule runs only when some input
/// requires a gradient and recording is enabled; otherwise no edges are kept.
inline Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  node->id = detail::next_node_id();
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (any && !detail::recording_disabled()) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

/// One entry of a traced graph: node id, op kind and input ids.
struct GraphRecord {
  std::uint64_t id;
  std::string_view op;
  std::vector<std::uint64_t> inputs;
};

/// Nodes reachable from a root, inputs before consumers.
class Graph {
 public:
  explicit Graph(const Tensor& root) {
    if (!root.defined()) return;
    // Iterative post-order DFS; each node is emitted once.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    std::unordered_set<detail::Node*> seen;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        detail::Node* child = node->inputs[next++].get();
        if (seen.insert(child).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }

  std::vector<GraphRecord> records() const {
    std::vector<GraphRecord> out;
    out.reserve(order_.size());
    for (const detail::Node* n : order_) {
      GraphRecord r{n->id, n->op, {}};
      for (const auto& in : n->inputs) r.inputs.push_back(in->id);
      out.push_back(std::move(r));
    }
    return out;
  }

  const std::vector<detail::Node*>& nodes() const { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

/// Populates d(loss)/d(leaf) for every leaf with requires_grad. Leaf grads
/// accumulate across calls (call zero_grad between steps); interior grads are
/// reset on each call.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  Graph graph(loss);
  const auto& order = graph.nodes();
  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  order.back()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Throws NumericFault naming the first non-finite element of data or grad.
inline void require_finite(const Tensor& t, const std::string& context) {
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw NumericFault(context + ": non-finite value at index " + std::to_string(i));
    }
  }
  if (t.has_grad()) {
    const auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericFault(context + ": non-finite gradient at index " + std::to_string(i));
      }
    }
  }
}

}  // namespace hamalign
