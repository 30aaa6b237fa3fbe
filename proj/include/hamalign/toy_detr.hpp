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

// Small set-prediction detector: strided conv backbone, one dense
// self-attention encoder layer per level and a single cross-attention
// decoder block over learned queries.

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "hamalign/checkpoint.hpp"
#include "hamalign/nn.hpp"
#include "hamalign/ops.hpp"
#include "hamalign/rng.hpp"
#include "hamalign/set_detect.hpp"

namespace hamalign {

struct DetrConfig {
  std::size_t C = 16;
  std::size_t L = 2;
  std::size_t N = 8;  // queries
  std::size_t num_classes = 3;
  std::size_t image_size = 32;
  std::size_t image_channels = 3;
  double leaky_slope = 0.2;

  void validate() const {
    if (C == 0 || C % 4 != 0) throw ConfigError("detr: C=" + std::to_string(C) + " must be a positive multiple of 4");
    if (L == 0) throw ConfigError("detr: L must be positive");
    if (N == 0) throw ConfigError("detr: N must be positive");
    if (num_classes == 0) throw ConfigError("detr: num_classes must be positive");
    if (image_size == 0 || image_size % (std::size_t{1} << L) != 0) {
      throw ConfigError("detr: image size " + std::to_string(image_size) + " not divisible by 2^L=" +
                        std::to_string(std::size_t{1} << L));
    }
  }

  std::vector<LevelSize> level_sizes() const {
    std::vector<LevelSize> out;
    for (std::size_t l = 1; l <= L; ++l) out.push_back({image_size >> l, image_size >> l});
    return out;
  }
};

struct BackboneParams {
  std::vector<Tensor> weight;  // per stage: C x C_in x 3 x 3
  std::vector<Tensor> bias;    // per stage: C
};

struct EncoderLevelParams {
  Tensor wq, wk, wv, wo;  // C x C
};

struct DecoderParams {
  Tensor queries;  // N x C
  Tensor wq, wk, wv, wo;
  Tensor class_weight, class_bias;  // (num_classes + 1) x C, num_classes + 1
  Tensor box_weight, box_bias;      // 4 x C, 4
};

struct DetrParams {
  BackboneParams backbone;
  std::vector<EncoderLevelParams> encoder;
  DecoderParams decoder;

  static DetrParams init(const DetrConfig& cfg, const Rng& root) {
    cfg.validate();
    const std::size_t c = cfg.C;
    auto uniform = [](Rng& rng, Shape shape, double bound) {
      std::vector<double> v(shape_size(shape));
      for (double& x : v) x = rng.uniform(-bound, bound);
      return Tensor::from(std::move(shape), std::move(v), true);
    };
    DetrParams p;
    Rng rb = root.split(stream::backbone);
    for (std::size_t l = 0; l < cfg.L; ++l) {
      const std::size_t cin = l == 0 ? cfg.image_channels : c;
      p.backbone.weight.push_back(uniform(rb, {c, cin, 3, 3}, std::sqrt(6.0 / static_cast<double>(cin * 9))));
      p.backbone.bias.push_back(Tensor::zeros({c}, true));
    }
    const double proj = 1.0 / std::sqrt(static_cast<double>(c));
    Rng re = root.split(stream::encoder);
    for (std::size_t l = 0; l < cfg.L; ++l) {
      p.encoder.push_back({uniform(re, {c, c}, proj), uniform(re, {c, c}, proj), uniform(re, {c, c}, proj),
                           uniform(re, {c, c}, proj)});
    }
    Rng rd = root.split(stream::decoder);
    DecoderParams& d = p.decoder;
    d.queries = uniform(rd, {cfg.N, c}, 1.0);
    d.wq = uniform(rd, {c, c}, 4.0 * proj);  // sharper initial cross-attention
    d.wk = uniform(rd, {c, c}, proj);
    d.wv = uniform(rd, {c, c}, proj);
    d.wo = uniform(rd, {c, c}, proj);
    d.class_weight = uniform(rd, {cfg.num_classes + 1, c}, proj);
    d.class_bias = Tensor::zeros({cfg.num_classes + 1}, true);
    d.box_weight = uniform(rd, {4, c}, proj);
    d.box_bias = Tensor::zeros({4}, true);
    return p;
  }

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < backbone.weight.size(); ++l) {
      out.push_back({"backbone.s" + std::to_string(l) + ".weight", backbone.weight[l]});
      out.push_back({"backbone.s" + std::to_string(l) + ".bias", backbone.bias[l]});
    }
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string prefix = "encoder.l" + std::to_string(l) + ".";
      out.push_back({prefix + "wq", encoder[l].wq});
      out.push_back({prefix + "wk", encoder[l].wk});
      out.push_back({prefix + "wv", encoder[l].wv});
      out.push_back({prefix + "wo", encoder[l].wo});
    }
    out.push_back({"decoder.queries", decoder.queries});
    out.push_back({"decoder.wq", decoder.wq});
    out.push_back({"decoder.wk", decoder.wk});
    out.push_back({"decoder.wv", decoder.wv});
    out.push_back({"decoder.wo", decoder.wo});
    out.push_back({"decoder.class_weight", decoder.class_weight});
    out.push_back({"decoder.class_bias", decoder.class_bias});
    out.push_back({"decoder.box_weight", decoder.box_weight});
    out.push_back({"decoder.box_bias", decoder.box_bias});
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }
};

/// Fixed 2-D sinusoidal encoding, (H*W) x C. The first C/2 channels encode
/// the row, the rest the column; within each half channel pairs (2i, 2i+1)
/// hold sin/cos of pos / 10000^(2i / (C/2)) with pos scaled to [0, 2*pi).
/// Results are cached per (H, W, C).
inline Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t c) {
  if (c % 4 != 0) throw ConfigError("positional_encoding: C=" + std::to_string(c) + " must be a multiple of 4");
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Tensor> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(h, w, c);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const std::size_t half = c / 2;
  std::vector<double> v(h * w * c);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double py = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(h);
      const double px = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(w);
      double* row = v.data() + (i * w + j) * c;
      for (std::size_t d = 0; d < half; d += 2) {
        const double freq = std::pow(10000.0, static_cast<double>(d) / static_cast<double>(half));
        row[d] = std::sin(py / freq);
        row[d + 1] = std::cos(py / freq);
        row[half + d] = std::sin(px / freq);
        row[half + d + 1] = std::cos(px / freq);
      }
    }
  }
  Tensor pe = Tensor::from({h * w, c}, std::move(v), false);
  cache.emplace(key, pe);
  return pe;
}

/// C x H x W map to (H*W) x C tokens and back.
inline Tensor to_tokens(const Tensor& map) {
  detail::require_map("to_tokens", map);
  return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

inline Tensor from_tokens(const Tensor& tokens, std::size_t h, std::size_t w) {
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

/// softmax(Q K^T / sqrt(d)) row-wise.
inline Tensor attention_weights(const Tensor& q, const Tensor& k) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return softmax_axis(scale(matmul(q, transpose(k)), inv), 1);
}

inline std::vector<Tensor> backbone_forward(const Tensor& image, const BackboneParams& params, const DetrConfig& cfg) {
  detail::require_map("backbone_forward", image);
  const std::size_t div = std::size_t{1} << cfg.L;
  if (image.dim(1) % div != 0 || image.dim(2) % div != 0) {
    throw ConfigError("backbone_forward: input " + shape_str(image.shape()) + " not divisible by 2^L=" +
                      std::to_string(div));
  }
  if (params.weight.size() != cfg.L) throw ConfigError("backbone_forward: stage count differs from L");
  std::vector<Tensor> levels;
  Tensor x = image;
  for (std::size_t l = 0; l < cfg.L; ++l) {
    x = leaky_relu(conv2d(x, params.weight[l], params.bias[l], 2, 1), cfg.leaky_slope);
    levels.push_back(x);
  }
  return levels;
}

struct EncoderTrace {
  std::vector<Tensor> attention;  // per level, T x T
};

/// Per level: tokens plus position, one self-attention layer, output
/// projection, residual onto the raw tokens.
inline std::vector<Tensor> encoder_forward(const std::vector<Tensor>& f, const std::vector<EncoderLevelParams>& params,
                                           EncoderTrace* trace = nullptr) {
  if (f.size() != params.size()) throw ConfigError("encoder_forward: level count differs from parameters");
  std::vector<Tensor> out;
  if (trace) trace->attention.clear();
  for (std::size_t l = 0; l < f.size(); ++l) {
    const std::size_t c = f[l].dim(0), h = f[l].dim(1), w = f[l].dim(2);
    const Tensor x = to_tokens(f[l]);
    const Tensor xp = add(x, positional_encoding(h, w, c));
    const Tensor a = attention_weights(linear(xp, params[l].wq), linear(xp, params[l].wk));
    if (trace) trace->attention.push_back(a);
    const Tensor y = linear(matmul(a, linear(xp, params[l].wv)), params[l].wo);
    out.push_back(from_tokens(add(x, y), h, w));
  }
  return out;
}

/// Learned queries attend to all encoder tokens (with position) of all
/// levels. Boxes are squashed into [0,1] by a logistic.
inline PredictionSet decoder_forward(const std::vector<Tensor>& p, const DecoderParams& d) {
  std::vector<Tensor> memory_parts;
  for (const Tensor& level : p) {
    detail::require_map("decoder_forward", level);
    if (level.dim(0) != d.queries.dim(1)) throw_dims("decoder_forward", level.shape(), d.queries.shape());
    memory_parts.push_back(add(to_tokens(level), positional_encoding(level.dim(1), level.dim(2), level.dim(0))));
  }
  const Tensor memory = memory_parts.size() == 1 ? memory_parts[0] : concat(memory_parts);
  const Tensor a = attention_weights(linear(d.queries, d.wq), linear(memory, d.wk));
  const Tensor hidden = add(d.queries, linear(matmul(a, linear(memory, d.wv)), d.wo));
  return {linear(hidden, d.class_weight, d.class_bias), sigmoid(linear(hidden, d.box_weight, d.box_bias))};
}

}  // namespace hamalign
