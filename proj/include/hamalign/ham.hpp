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

// Hybrid attention: coordinate attention per level (split into K groups,
// spatial attention on one half, channel attention on the other, concat and
// shuffle) followed by level attention that blends the levels with
// per-channel coefficients derived from their pooled descriptors.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hamalign/checkpoint.hpp"
#include "hamalign/nn.hpp"
#include "hamalign/ops.hpp"
#include "hamalign/rng.hpp"

namespace hamalign {

/// Shape of the spatial weight/bias maps: one value per position and channel
/// (bound to a level's resolution) or one value per channel.
enum class ParamMode { paper_literal, broadcast };

/// How level logits become level coefficients.
enum class LevelNorm { softmax, sigmoid };

struct HamConfig {
  std::size_t K = 2;
  std::size_t L = 2;
  std::size_t C = 16;
  double gn_eps = 1e-5;
  ParamMode param_mode = ParamMode::paper_literal;
  std::size_t shuffle_sub_groups = 2;

  /// Channels per attention branch in one group.
  std::size_t branch_channels() const { return C / (2 * K); }

  void validate() const {
    if (K == 0 || C == 0 || C % (2 * K) != 0) {
      throw ConfigError("ham: C=" + std::to_string(C) + " is not divisible by 2K=" + std::to_string(2 * K) +
                        " (K=" + std::to_string(K) + ")");
    }
    if (L == 0) throw ConfigError("ham: L must be at least 1");
    if (!(gn_eps > 0.0)) throw ConfigError("ham: gn_eps must be positive");
    if (shuffle_sub_groups == 0 || (C / K) % shuffle_sub_groups != 0) {
      throw ConfigError("ham: group width " + std::to_string(C / K) + " not divisible by shuffle_sub_groups=" +
                        std::to_string(shuffle_sub_groups));
    }
  }
};

struct CamLevelParams {
  Tensor w_s, b_s, w_c, b_c;
};

struct LamParams {
  Tensor fc_weight;  // (L*C) x C
  Tensor fc_bias;    // L*C
};

struct HamParams {
  std::vector<CamLevelParams> cam;
  LamParams lam;

  /// Attention weights start at one and biases at zero; the level layer
  /// starts with small uniform weights and zero bias.
  static HamParams init(const HamConfig& cfg, const std::vector<LevelSize>& levels, Rng rng) {
    cfg.validate();
    if (levels.size() != cfg.L) {
      throw ConfigError("ham: " + std::to_string(levels.size()) + " level sizes for L=" + std::to_string(cfg.L));
    }
    const std::size_t c = cfg.branch_channels();
    HamParams p;
    for (const LevelSize& s : levels) {
      const Shape spatial = cfg.param_mode == ParamMode::paper_literal ? Shape{c, s.h, s.w} : Shape{c, 1, 1};
      p.cam.push_back({Tensor::full(spatial, 1.0, true), Tensor::zeros(spatial, true),
                       Tensor::full({c, 1, 1}, 1.0, true), Tensor::zeros({c, 1, 1}, true)});
    }
    std::vector<double> w(cfg.L * cfg.C * cfg.C);
    for (double& v : w) v = rng.uniform(-1e-2, 1e-2);
    p.lam.fc_weight = Tensor::from({cfg.L * cfg.C, cfg.C}, std::move(w), true);
    p.lam.fc_bias = Tensor::zeros({cfg.L * cfg.C}, true);
    return p;
  }

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < cam.size(); ++l) {
      const std::string prefix = "cam.l" + std::to_string(l) + ".";
      out.push_back({prefix + "w_s", cam[l].w_s});
      out.push_back({prefix + "b_s", cam[l].b_s});
      out.push_back({prefix + "w_c", cam[l].w_c});
      out.push_back({prefix + "b_c", cam[l].b_c});
    }
    out.push_back({"lam.fc_weight", lam.fc_weight});
    out.push_back({"lam.fc_bias", lam.fc_bias});
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }
};

/// Intermediate attention values of one level, for inspection and dumping.
struct CamTrace {
  std::vector<Tensor> spatial;  // per group, branch_channels x H x W
  std::vector<Tensor> channel;  // per group, branch_channels x 1 x 1
};

struct HamTrace {
  std::vector<CamTrace> levels;
  Tensor alpha;  // L x C level coefficients
};

/// K contiguous channel groups, each halved in order.
inline std::vector<std::pair<Tensor, Tensor>> split_groups(const Tensor& x, std::size_t K) {
  if (x.rank() != 3) throw DimensionError("split_groups: expected CxHxW, got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0);
  if (K == 0 || c % (2 * K) != 0) {
    throw ConfigError("split_groups: C=" + std::to_string(c) + " is not divisible by 2K=" + std::to_string(2 * K) +
                      " (K=" + std::to_string(K) + ")");
  }
  const std::size_t half = c / (2 * K);
  std::vector<std::pair<Tensor, Tensor>> groups;
  groups.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t base = 2 * k * half;
    groups.emplace_back(slice(x, base, base + half), slice(x, base + half, base + 2 * half));
  }
  return groups;
}

/// sigmoid(w_s * GN(p) + b_s), with one normalisation group per channel.
inline Tensor spatial_attention(const Tensor& p_k1, const Tensor& w_s, const Tensor& b_s, double gn_eps = 1e-5) {
  if (p_k1.rank() != 3) throw DimensionError("spatial_attention: expected CxHxW, got " + shape_str(p_k1.shape()));
  return sigmoid(add(mul(w_s, group_norm(p_k1, p_k1.dim(0), gn_eps)), b_s));
}

/// sigmoid(w_c * GAP(p) + b_c) as a C x 1 x 1 vector.
inline Tensor channel_attention(const Tensor& p_k2, const Tensor& w_c, const Tensor& b_c) {
  const Tensor pooled = global_avg_pool(p_k2);
  if (w_c.shape() != pooled.shape()) throw_dims("channel_attention", pooled.shape(), w_c.shape());
  if (b_c.shape() != pooled.shape()) throw_dims("channel_attention", pooled.shape(), b_c.shape());
  return sigmoid(add(mul(w_c, pooled), b_c));
}

/// Coordinate attention for one level; output has the shape of f.
inline Tensor cam_forward(const Tensor& f, const Tensor& p, const CamLevelParams& params, const HamConfig& cfg,
                          CamTrace* trace = nullptr) {
  if (f.shape() != p.shape()) throw_dims("cam_forward", f.shape(), p.shape());
  if (f.rank() != 3 || f.dim(0) != cfg.C) {
    throw DimensionError("cam_forward: expected " + std::to_string(cfg.C) + " channels, got " + shape_str(f.shape()));
  }
  cfg.validate();
  const auto fg = split_groups(f, cfg.K);
  const auto pg = split_groups(p, cfg.K);
  const auto perm = channel_shuffle_permutation(cfg.C / cfg.K, cfg.shuffle_sub_groups);
  std::vector<Tensor> groups;
  groups.reserve(cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    const Tensor sa = spatial_attention(pg[k].first, params.w_s, params.b_s, cfg.gn_eps);
    const Tensor ca = channel_attention(pg[k].second, params.w_c, params.b_c);
    if (trace) {
      trace->spatial.push_back(sa);
      trace->channel.push_back(ca);
    }
    groups.push_back(permute_channels(concat({mul(fg[k].first, sa), mul(fg[k].second, ca)}), perm));
  }
  return cfg.K == 1 ? groups.front() : concat(groups);
}

/// Average-pools every level down to the spatial size of the last (coarsest) one.
inline std::vector<Tensor> resample_to_coarsest(const std::vector<Tensor>& levels) {
  if (levels.empty()) throw UsageError("resample_to_coarsest: no levels");
  const std::size_t h = levels.back().dim(1), w = levels.back().dim(2);
  std::vector<Tensor> out;
  out.reserve(levels.size());
  for (const Tensor& x : levels) {
    if (x.dim(1) % h != 0 || x.dim(2) % w != 0 || x.dim(1) / h != x.dim(2) / w) {
      throw DimensionError("resample_to_coarsest: " + shape_str(x.shape()) + " is not an integer multiple of " +
                           shape_str(levels.back().shape()));
    }
    out.push_back(avg_pool(x, x.dim(1) / h));
  }
  return out;
}

/// Uniform average of equally shaped levels.
inline Tensor mean_levels(const std::vector<Tensor>& levels) {
  return scale(add_n(levels), 1.0 / static_cast<double>(levels.size()));
}

/// Level attention over levels already at a common resolution.
inline Tensor lam_forward(const std::vector<Tensor>& fhat, const LamParams& params, const HamConfig& cfg,
                          LevelNorm norm = LevelNorm::softmax, Tensor* alpha_out = nullptr) {
  if (fhat.size() != cfg.L) {
    throw ConfigError("lam_forward: " + std::to_string(fhat.size()) + " levels for L=" + std::to_string(cfg.L));
  }
  for (const Tensor& x : fhat) {
    if (x.shape() != fhat.front().shape()) throw_dims("lam_forward", fhat.front().shape(), x.shape());
  }
  const std::size_t c = cfg.C;
  if (fhat.front().dim(0) != c) throw DimensionError("lam_forward: channel count differs from config");
  if (params.fc_weight.shape() != Shape{cfg.L * c, c}) {
    throw ConfigError("lam_forward: fc_weight " + shape_str(params.fc_weight.shape()) + " does not match L=" +
                      std::to_string(cfg.L) + ", C=" + std::to_string(c));
  }
  if (cfg.L == 1 && norm == LevelNorm::softmax) {
    // Softmax over a single level is identically one.
    if (alpha_out) *alpha_out = Tensor::full({1, c}, 1.0);
    return fhat.front();
  }
  std::vector<Tensor> pooled;
  pooled.reserve(fhat.size());
  for (const Tensor& x : fhat) pooled.push_back(global_avg_pool(x));
  const Tensor merged = reshape(add_n(pooled), {c});
  const Tensor logits = reshape(linear(merged, params.fc_weight, params.fc_bias), {cfg.L, c});
  const Tensor alpha = norm == LevelNorm::softmax ? softmax_axis(logits, 0) : sigmoid(logits);
  if (alpha_out) *alpha_out = alpha;
  std::vector<Tensor> weighted;
  weighted.reserve(cfg.L);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    weighted.push_back(mul(fhat[l], reshape(slice(alpha, l, l + 1), {c, 1, 1})));
  }
  return add_n(weighted);
}

/// Coordinate attention per level, resampling to the coarsest level, then
/// level attention. Output is C x H_L x W_L.
inline Tensor ham_forward(const std::vector<Tensor>& f, const std::vector<Tensor>& p, const HamParams& params,
                          const HamConfig& cfg, HamTrace* trace = nullptr, LevelNorm norm = LevelNorm::softmax) {
  if (f.size() != cfg.L || p.size() != cfg.L || params.cam.size() != cfg.L) {
    throw ConfigError("ham_forward: level count mismatch with L=" + std::to_string(cfg.L));
  }
  std::vector<Tensor> fhat;
  fhat.reserve(cfg.L);
  if (trace) trace->levels.assign(cfg.L, {});
  for (std::size_t l = 0; l < cfg.L; ++l) {
    fhat.push_back(cam_forward(f[l], p[l], params.cam[l], cfg, trace ? &trace->levels[l] : nullptr));
  }
  return lam_forward(resample_to_coarsest(fhat), params.lam, cfg, norm, trace ? &trace->alpha : nullptr);
}

}  // namespace hamalign
