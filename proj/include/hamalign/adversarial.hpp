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

// Gradient reversal, the image-level domain discriminator, its
// log-likelihood objective and a plain SGD optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hamalign/checkpoint.hpp"
#include "hamalign/nn.hpp"
#include "hamalign/ops.hpp"
#include "hamalign/rng.hpp"

namespace hamalign {

struct GrlConfig {
  double lambda = 0.1;
  double reversal_scale = 1.0;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("grl: lambda must be >= 0");
    if (!(reversal_scale > 0.0) || !std::isfinite(reversal_scale)) throw ConfigError("grl: reversal_scale must be > 0");
  }
};

namespace detail {

// Identity forward; backward adds -factor * upstream. factor may be 0.
inline Tensor reversal(const Tensor& x, double factor) {
  return make_result("grl", x.shape(), x.values(), {x}, [factor](Node& self) {
    auto& in = input(self, 0);
    double* g = in.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += -factor * self.grad[i];
  });
}

}  // namespace detail

inline Tensor grl(const Tensor& x, double scale = 1.0) {
  if (!(scale > 0.0)) throw ConfigError("grl: scale must be > 0, got " + std::to_string(scale));
  return detail::reversal(x, scale);
}

/// Reversal for the feature side of the adversarial branch: the
/// discriminator sees the unweighted objective and the features receive
/// -lambda * reversal_scale times its gradient.
inline Tensor grl_weighted(const Tensor& x, const GrlConfig& cfg) {
  cfg.validate();
  return detail::reversal(x, cfg.lambda * cfg.reversal_scale);
}

struct Discriminator {
  Tensor conv1_weight, conv1_bias;  // C/2 x C x 3 x 3
  Tensor conv2_weight, conv2_bias;  // C/4 x C/2 x 3 x 3
  Tensor fc_weight, fc_bias;        // 1 x C/4
  double leaky_slope = 0.2;

  std::size_t channels() const { return conv1_weight.dim(1); }

  static void check_channels(std::size_t c) {
    if (c < 4 || c % 4 != 0) {
      throw ConfigError("discriminator: C=" + std::to_string(c) + " must be a positive multiple of 4");
    }
  }

  static Discriminator init(std::size_t c, Rng rng, double slope = 0.2) {
    check_channels(c);
    auto uniform = [&rng](Shape shape, double bound) {
      std::vector<double> v(shape_size(shape));
      for (double& x : v) x = rng.uniform(-bound, bound);
      return Tensor::from(std::move(shape), std::move(v), true);
    };
    Discriminator d;
    d.conv1_weight = uniform({c / 2, c, 3, 3}, std::sqrt(6.0 / static_cast<double>(c * 9)));
    d.conv1_bias = Tensor::zeros({c / 2}, true);
    d.conv2_weight = uniform({c / 4, c / 2, 3, 3}, std::sqrt(6.0 / static_cast<double>(c / 2 * 9)));
    d.conv2_bias = Tensor::zeros({c / 4}, true);
    d.fc_weight = uniform({1, c / 4}, std::sqrt(3.0 / static_cast<double>(c / 4)));
    d.fc_bias = Tensor::zeros({1}, true);
    d.leaky_slope = slope;
    return d;
  }

  static Discriminator zeros(std::size_t c) {
    check_channels(c);
    Discriminator d;
    d.conv1_weight = Tensor::zeros({c / 2, c, 3, 3}, true);
    d.conv1_bias = Tensor::zeros({c / 2}, true);
    d.conv2_weight = Tensor::zeros({c / 4, c / 2, 3, 3}, true);
    d.conv2_bias = Tensor::zeros({c / 4}, true);
    d.fc_weight = Tensor::zeros({1, c / 4}, true);
    d.fc_bias = Tensor::zeros({1}, true);
    return d;
  }

  std::vector<NamedTensor> named() const {
    return {{"disc.conv1.weight", conv1_weight}, {"disc.conv1.bias", conv1_bias},
            {"disc.conv2.weight", conv2_weight}, {"disc.conv2.bias", conv2_bias},
            {"disc.fc.weight", fc_weight},       {"disc.fc.bias", fc_bias}};
  }

  std::vector<Tensor> parameters() const {
    return {conv1_weight, conv1_bias, conv2_weight, conv2_bias, fc_weight, fc_bias};
  }
};

inline Tensor discriminator_logit(const Tensor& v, const Discriminator& d) {
  detail::require_map("discriminator", v);
  if (v.dim(0) != d.channels()) throw_dims("discriminator", v.shape(), d.conv1_weight.shape());
  Tensor x = leaky_relu(conv2d(v, d.conv1_weight, d.conv1_bias, 1, 1), d.leaky_slope);
  x = leaky_relu(conv2d(x, d.conv2_weight, d.conv2_bias, 1, 1), d.leaky_slope);
  x = global_avg_pool(x);
  return linear(reshape(x, {x.dim(0)}), d.fc_weight, d.fc_bias);
}

/// Probability that v came from the source domain, shape [1].
inline Tensor discriminator_forward(const Tensor& v, const Discriminator& d) {
  return sigmoid(discriminator_logit(v, d));
}

inline constexpr double kProbabilityClamp = 1e-7;

struct AdversarialLoss {
  Tensor value;  // scalar
  std::size_t saturation_events = 0;
};

/// mean_s log p_s + mean_t log(1 - p_t), probabilities clamped to
/// [1e-7, 1 - 1e-7]. Each clamped probability counts as a saturation event.
inline AdversarialLoss adversarial_loss(const std::vector<Tensor>& p_source, const std::vector<Tensor>& p_target) {
  if (p_source.empty() || p_target.empty()) {
    throw UsageError("adversarial_loss: need at least one sample per domain");
  }
  AdversarialLoss out;
  auto clamped = [&out](const Tensor& p) {
    if (p.size() != 1) throw DimensionError("adversarial_loss: expected scalar probability, got " + shape_str(p.shape()));
    const double v = p.data()[0];
    if (!std::isfinite(v)) throw NumericFault("adversarial_loss: non-finite probability");
    if (v < kProbabilityClamp || v > 1.0 - kProbabilityClamp) ++out.saturation_events;
    return clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  };
  std::vector<Tensor> src, tgt;
  for (const Tensor& p : p_source) src.push_back(log(clamped(p)));
  for (const Tensor& p : p_target) tgt.push_back(log(add_scalar(neg(clamped(p)), 1.0)));
  out.value = add(scale(sum(concat(src)), 1.0 / static_cast<double>(src.size())),
                  scale(sum(concat(tgt)), 1.0 / static_cast<double>(tgt.size())));
  return out;
}

namespace detail {

// log sigmoid(sign * z) for a scalar logit, evaluated without forming the
// probability. The value is held inside the probability clamp; the
// gradient is that of the unclamped function, so a saturated
// discriminator still receives a restoring signal.
inline Tensor log_sigmoid_clamped(const Tensor& z, double sign, std::size_t& saturation_events) {
  if (z.size() != 1) throw DimensionError("adversarial_loss: expected scalar logit, got " + shape_str(z.shape()));
  const double x = sign * z.data()[0];
  if (!std::isfinite(x)) throw NumericFault("adversarial_loss: non-finite logit");
  double v = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  const double lo = std::log(kProbabilityClamp), hi = std::log1p(-kProbabilityClamp);
  const bool saturated = v < lo || v > hi;
  if (saturated) {
    ++saturation_events;
    v = std::clamp(v, lo, hi);
  }
  if (auto* log = active_branch_log()) log->add(saturated);
  const double slope = sign / (1.0 + std::exp(x));  // sign * sigmoid(-x)
  return make_result("log_sigmoid_clamped", {1}, {v}, {z}, [slope](Node& self) {
    auto& in = input(self, 0);
    in.grad_buffer()[0] += slope * self.grad[0];
  });
}

}  // namespace detail

/// The adversarial objective of adversarial_loss computed from
/// discriminator logits: mean_s log sigma(z_s) + mean_t log(1 - sigma(z_t)).
/// Values agree with the probability form; clamped terms keep a gradient.
inline AdversarialLoss adversarial_loss_from_logits(const std::vector<Tensor>& z_source,
                                                    const std::vector<Tensor>& z_target) {
  if (z_source.empty() || z_target.empty()) {
    throw UsageError("adversarial_loss: need at least one sample per domain");
  }
  AdversarialLoss out;
  std::vector<Tensor> src, tgt;
  for (const Tensor& z : z_source) src.push_back(detail::log_sigmoid_clamped(z, 1.0, out.saturation_events));
  for (const Tensor& z : z_target) tgt.push_back(detail::log_sigmoid_clamped(z, -1.0, out.saturation_events));
  out.value = add(scale(sum(concat(src)), 1.0 / static_cast<double>(src.size())),
                  scale(sum(concat(tgt)), 1.0 / static_cast<double>(tgt.size())));
  return out;
}

/// Plain stochastic gradient descent, optionally with global-norm clipping.
struct Sgd {
  double learning_rate = 1e-3;
  double clip_norm = 0.0;  // 0 disables clipping
  double momentum = 0.0;   // heavy-ball coefficient; 0 is plain SGD
  double weight_decay = 0.0;  // L2 coefficient, added after clipping

  /// Applies one update from the accumulated gradients and clears them.
  /// Gradients are clipped by their global norm before entering the
  /// velocity.
  void step(const std::vector<Tensor>& params) {
    double factor = 1.0;
    if (clip_norm > 0.0) {
      double sq = 0.0;
      for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > clip_norm) factor = clip_norm / norm;
    }
    for (Tensor p : params) {  // handles share storage
      if (!p.has_grad()) continue;
      const auto g = p.grad();
      auto d = p.mutable_data();
      if (momentum == 0.0) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= learning_rate * (factor * g[i] + weight_decay * d[i]);
      } else {
        auto& v = velocity[p.id()];
        if (v.empty()) v.assign(d.size(), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) {
          v[i] = momentum * v[i] + factor * g[i] + weight_decay * d[i];
          d[i] -= learning_rate * v[i];
        }
      }
      p.zero_grad();
    }
  }

  std::map<std::uint64_t, std::vector<double>> velocity;  // per tensor id
};

}  // namespace hamalign
