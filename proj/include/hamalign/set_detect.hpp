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

// Set-prediction supervision: bipartite matching of predictions to ground
// truth and the loss over the matched set.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hamalign/ops.hpp"

namespace hamalign {

/// Centre/size box in image-relative units.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
};

/// Class index 0 is "no object".
struct BoxPrediction {
  std::vector<double> class_logits;
  Box box;
};

struct GroundTruthObject {
  std::size_t class_id = 1;
  Box box;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, ground truth)
  double total_cost = 0.0;
};

/// Row-major N x M matrix; rows are predictions, columns ground truth.
struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

struct MatchingConfig {
  double class_weight = 1.0;
  double box_weight = 1.0;
  bool use_log_prob = false;  // -log p instead of -p in the class term
};

struct DetectionLossConfig {
  double no_object_weight = 0.1;
  double class_weight = 1.0;
  double box_weight = 1.0;
  MatchingConfig matching;
};

inline double box_iou(const Box& a, const Box& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0 || uni <= 0) return 0.0;
  return inter / uni;
}

inline std::vector<double> softmax_values(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

inline double box_l1(const Box& a, const Box& b) {
  return std::fabs(a.cx - b.cx) + std::fabs(a.cy - b.cy) + std::fabs(a.w - b.w) + std::fabs(a.h - b.h);
}

/// cost[n][m] = -class_weight * p_n(class_m) + box_weight * |box_n - box_m|_1
inline CostMatrix pairwise_cost(const std::vector<BoxPrediction>& preds, const std::vector<GroundTruthObject>& gts,
                                const MatchingConfig& cfg = {}) {
  if (preds.size() < gts.size()) {
    throw ConfigError("pairwise_cost: " + std::to_string(preds.size()) + " predictions cannot cover " +
                      std::to_string(gts.size()) + " targets");
  }
  CostMatrix cost{preds.size(), gts.size(), std::vector<double>(preds.size() * gts.size())};
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const auto prob = softmax_values(preds[n].class_logits);
    for (std::size_t m = 0; m < gts.size(); ++m) {
      if (gts[m].class_id == 0 || gts[m].class_id >= prob.size()) {
        throw InputError("pairwise_cost: ground-truth class " + std::to_string(gts[m].class_id) + " out of range");
      }
      const double p = prob[gts[m].class_id];
      const double cls = cfg.use_log_prob ? -std::log(std::max(p, 1e-300)) : -p;
      cost(n, m) = cfg.class_weight * cls + cfg.box_weight * box_l1(preds[n].box, gts[m].box);
    }
  }
  return cost;
}

namespace detail {

/// Shortest-augmenting-path Kuhn-Munkres with potentials on the rows/cols
/// selected from `cost`. Returns the optimal total and, per selected column,
/// the chosen row (indices into the full matrix).
inline double kuhn_munkres(const CostMatrix& cost, const std::vector<std::size_t>& rows,
                           const std::vector<std::size_t>& cols, std::vector<std::size_t>* chosen = nullptr) {
  const std::size_t n = rows.size(), m = cols.size();
  if (m == 0) {
    if (chosen) chosen->clear();
    return 0.0;
  }
  // Columns act as workers (1..m), rows as jobs (1..n); 0 is the virtual job.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t worker = 1; worker <= m; ++worker) {
    owner[0] = worker;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(rows[j - 1], cols[i0 - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  if (chosen) chosen->assign(m, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (owner[j] == 0) continue;
    total += cost(rows[j - 1], cols[owner[j] - 1]);
    if (chosen) (*chosen)[owner[j] - 1] = rows[j - 1];
  }
  return total;
}

}  // namespace detail

/// Minimum-cost assignment covering every column of an N x M matrix (N >= M).
/// Among optimal assignments, column 0 takes the lowest admissible row, then
/// column 1, and so on.
inline Assignment hungarian_assign(const CostMatrix& cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n < m) {
    throw ConfigError("hungarian_assign: " + std::to_string(n) + " rows cannot cover " + std::to_string(m) + " columns");
  }
  if (cost.values.size() != n * m) throw DimensionError("hungarian_assign: cost buffer does not match its shape");
  for (std::size_t i = 0; i < cost.values.size(); ++i) {
    if (!std::isfinite(cost.values[i])) {
      throw InputError("hungarian_assign: non-finite cost at (" + std::to_string(i / m) + ", " +
                       std::to_string(i % m) + ")");
    }
  }
  Assignment result;
  std::vector<std::size_t> rows(n), cols(m);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  for (std::size_t j = 0; j < m; ++j) cols[j] = j;

  std::vector<std::size_t> chosen;
  double remaining = detail::kuhn_munkres(cost, rows, cols, &chosen);
  for (std::size_t c = 0; c < m; ++c) {
    const std::vector<std::size_t> rest(cols.begin() + static_cast<std::ptrdiff_t>(c + 1), cols.end());
    const double tol = 1e-12 * (1.0 + std::fabs(remaining));
    std::size_t pick = chosen[c];
    for (std::size_t r : rows) {
      if (r >= pick) break;
      std::vector<std::size_t> others;
      others.reserve(rows.size() - 1);
      for (std::size_t q : rows) {
        if (q != r) others.push_back(q);
      }
      if (cost(r, c) + detail::kuhn_munkres(cost, others, rest) <= remaining + tol) {
        pick = r;
        break;
      }
    }
    result.pairs.emplace_back(pick, c);
    result.total_cost += cost(pick, c);
    rows.erase(std::find(rows.begin(), rows.end(), pick));
    remaining = detail::kuhn_munkres(cost, rows, rest, &chosen);
    chosen.insert(chosen.begin(), c + 1, 0);  // keep chosen indexed by column
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

/// Differentiable predictions of one image: logits N x (classes + 1) and
/// boxes N x 4 in (cx, cy, w, h) order.
struct PredictionSet {
  Tensor logits;
  Tensor boxes;

  std::size_t size() const { return logits.dim(0); }

  std::vector<BoxPrediction> values() const {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<BoxPrediction> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].class_logits.assign(logits.data().begin() + static_cast<std::ptrdiff_t>(i * k),
                                 logits.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
      const auto b = boxes.data().subspan(i * 4, 4);
      out[i].box = {b[0], b[1], b[2], b[3]};
    }
    return out;
  }
};

inline Assignment match(const PredictionSet& preds, const std::vector<GroundTruthObject>& gts,
                        const MatchingConfig& cfg = {}) {
  Assignment a = hungarian_assign(pairwise_cost(preds.values(), gts, cfg));
  if (auto* log = detail::active_branch_log()) {
    for (const auto& [r, c] : a.pairs) log->add(r * 64 + c);
  }
  return a;
}

/// class_weight * (weighted mean cross-entropy, unmatched rows target "no
/// object" with weight no_object_weight) + box_weight * (L1 summed over box
/// coordinates, averaged over matched pairs).
inline Tensor detection_loss(const PredictionSet& preds, const std::vector<GroundTruthObject>& gts,
                             const Assignment& assignment, const DetectionLossConfig& cfg = {}) {
  const std::size_t n = preds.size();
  if (preds.boxes.shape() != Shape{n, 4}) throw_dims("detection_loss", preds.logits.shape(), preds.boxes.shape());
  std::vector<std::size_t> target(n, 0);
  std::vector<double> weight(n, cfg.no_object_weight);
  std::vector<double> mask(n * 4, 0.0), target_box(n * 4, 0.0);
  for (const auto& [p, g] : assignment.pairs) {
    if (p >= n || g >= gts.size()) throw UsageError("detection_loss: assignment index out of range");
    target[p] = gts[g].class_id;
    weight[p] = 1.0;
    const Box& b = gts[g].box;
    const double coords[4] = {b.cx, b.cy, b.w, b.h};
    for (std::size_t c = 0; c < 4; ++c) {
      mask[p * 4 + c] = 1.0;
      target_box[p * 4 + c] = coords[c];
    }
  }
  double weight_sum = 0.0;
  for (double w : weight) weight_sum += w;
  const Tensor picked = gather_rows(log_softmax_axis(preds.logits, 1), target);
  Tensor loss = scale(sum(mul(picked, Tensor::from({n}, weight))), -cfg.class_weight / weight_sum);
  if (!assignment.pairs.empty()) {
    const Tensor diff = mul(sub(preds.boxes, Tensor::from({n, 4}, target_box)), Tensor::from({n, 4}, mask));
    loss = add(loss, scale(sum(abs(diff)), cfg.box_weight / static_cast<double>(assignment.pairs.size())));
  }
  return loss;
}

}  // namespace hamalign
