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

// Detector, attention alignment module and discriminator assembled into one
// trainable model, plus the joint training step.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hamalign/adversarial.hpp"
#include "hamalign/ham.hpp"
#include "hamalign/set_detect.hpp"
#include "hamalign/toy_detr.hpp"

namespace hamalign {

/// What the discriminator sees. direct: level-averaged backbone features.
/// attention: coordinate and/or level attention over (f, p).
enum class AlignmentPath { none, direct, attention };

struct AlignmentConfig {
  AlignmentPath path = AlignmentPath::none;
  bool cam = false;
  bool lam = false;
};

struct ModelConfig {
  DetrConfig detr;
  HamConfig ham;
  LevelNorm level_norm = LevelNorm::softmax;
  AlignmentConfig align;
  DetectionLossConfig loss;
  double disc_slope = 0.2;

  void validate() const {
    detr.validate();
    if (align.path == AlignmentPath::attention) {
      if (ham.C != detr.C || ham.L != detr.L) {
        throw ConfigError("model: attention module C/L (" + std::to_string(ham.C) + "/" + std::to_string(ham.L) +
                          ") differ from detector C/L (" + std::to_string(detr.C) + "/" + std::to_string(detr.L) + ")");
      }
      ham.validate();
      if (!align.cam && !align.lam) throw ConfigError("model: attention path needs cam or lam");
    } else if (align.cam || align.lam) {
      throw ConfigError("model: cam/lam flags require the attention path");
    }
    if (align.path != AlignmentPath::none) Discriminator::check_channels(detr.C);
  }
};

/// One image with its objects (empty for unlabelled target images).
struct Sample {
  Tensor image;
  std::vector<GroundTruthObject> objects;
};

struct Model {
  ModelConfig cfg;
  DetrParams detr;
  HamParams ham;
  Discriminator disc;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Rng root(seed);
    Model m;
    m.cfg = cfg;
    m.detr = DetrParams::init(cfg.detr, root);
    if (cfg.align.path == AlignmentPath::attention) {
      m.ham = HamParams::init(cfg.ham, cfg.detr.level_sizes(), root.split(stream::ham));
    }
    if (cfg.align.path != AlignmentPath::none) {
      m.disc = Discriminator::init(cfg.detr.C, root.split(stream::discriminator), cfg.disc_slope);
    }
    return m;
  }

  bool adversarial() const { return cfg.align.path != AlignmentPath::none; }

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out = detr.named();
    if (cfg.align.path == AlignmentPath::attention) {
      for (auto& nt : ham.named()) out.push_back(std::move(nt));
    }
    if (adversarial()) {
      for (auto& nt : disc.named()) out.push_back(std::move(nt));
    }
    return out;
  }

  /// Parameters minimising the detection objective (and, through the
  /// reversal, confusing the discriminator).
  std::vector<Tensor> detector_parameters() const {
    std::vector<Tensor> out = detr.parameters();
    if (cfg.align.path == AlignmentPath::attention) {
      for (const Tensor& t : ham.parameters()) out.push_back(t);
    }
    return out;
  }
};

struct Features {
  std::vector<Tensor> f;  // backbone levels
  std::vector<Tensor> p;  // encoder levels
};

inline Features extract_features(const Model& m, const Tensor& image) {
  Features out;
  out.f = backbone_forward(image, m.detr.backbone, m.cfg.detr);
  out.p = encoder_forward(out.f, m.detr.encoder);
  return out;
}

inline PredictionSet detect(const Model& m, const Features& feats) { return decoder_forward(feats.p, m.detr.decoder); }

/// Feature map handed to the discriminator, C x H_L x W_L.
inline Tensor aligned_features(const Model& m, const Features& feats, HamTrace* trace = nullptr) {
  const auto& a = m.cfg.align;
  if (a.path == AlignmentPath::none) throw UsageError("aligned_features: model has no alignment path");
  if (a.path == AlignmentPath::direct) return mean_levels(resample_to_coarsest(feats.f));
  if (a.cam && a.lam) return ham_forward(feats.f, feats.p, m.ham, m.cfg.ham, trace, m.cfg.level_norm);
  std::vector<Tensor> fhat = feats.f;
  if (trace) trace->levels.assign(fhat.size(), {});
  if (a.cam) {
    for (std::size_t l = 0; l < fhat.size(); ++l) {
      fhat[l] = cam_forward(feats.f[l], feats.p[l], m.ham.cam[l], m.cfg.ham, trace ? &trace->levels[l] : nullptr);
    }
    return mean_levels(resample_to_coarsest(fhat));
  }
  return lam_forward(resample_to_coarsest(fhat), m.ham.lam, m.cfg.ham, m.cfg.level_norm,
                     trace ? &trace->alpha : nullptr);
}

struct Optimizers {
  Sgd detector;
  Sgd discriminator;
};

struct StepStats {
  double l_det = 0.0;
  double l_adv = std::numeric_limits<double>::quiet_NaN();  // NaN without alignment
  std::size_t saturation_events = 0;
};

struct Objective {
  Tensor l_det;
  AdversarialLoss adv;  // value undefined without an alignment path
  Tensor total;          // l_det - adv.value, or l_det
};

/// L_det on the labelled source batch and, with an alignment path, the
/// discriminator objective on both batches. With `reversal` the
/// discriminator input passes through the weighted reversal layer, so
/// backward(total) gives the discriminator the gradient of -L_adv and the
/// features -lambda * reversal_scale times it.
inline Objective build_objective(const Model& m, const std::vector<Sample>& source, const std::vector<Sample>& target,
                                 const GrlConfig& grl_cfg, bool reversal = true) {
  if (source.empty()) throw UsageError("train_step: empty source batch");
  if (m.adversarial() && target.empty()) throw UsageError("train_step: empty target batch");
  grl_cfg.validate();
  auto domain_logit = [&](const Features& feats) {
    const Tensor v = aligned_features(m, feats);
    return discriminator_logit(reversal ? grl_weighted(v, grl_cfg) : v, m.disc);
  };
  std::vector<Tensor> det_terms, z_source, z_target;
  for (const Sample& s : source) {
    const Features feats = extract_features(m, s.image);
    const PredictionSet preds = detect(m, feats);
    const Assignment assignment = match(preds, s.objects, m.cfg.loss.matching);
    det_terms.push_back(detection_loss(preds, s.objects, assignment, m.cfg.loss));
    if (m.adversarial()) z_source.push_back(domain_logit(feats));
  }
  if (m.adversarial()) {
    for (const Sample& t : target) z_target.push_back(domain_logit(extract_features(m, t.image)));
  }
  Objective out;
  out.l_det = scale(add_n(det_terms), 1.0 / static_cast<double>(det_terms.size()));
  out.total = out.l_det;
  if (m.adversarial()) {
    out.adv = adversarial_loss_from_logits(z_source, z_target);
    out.total = sub(out.l_det, out.adv.value);
  }
  return out;
}

/// One backward pass over the objective, then one SGD update for the
/// detector group and one for the discriminator.
inline StepStats train_step(Model& m, const std::vector<Sample>& source, const std::vector<Sample>& target,
                            const GrlConfig& grl_cfg, Optimizers& opt) {
  const Objective obj = build_objective(m, source, target, grl_cfg);
  StepStats stats;
  stats.l_det = obj.l_det.item();
  if (m.adversarial()) {
    stats.l_adv = obj.adv.value.item();
    stats.saturation_events = obj.adv.saturation_events;
  }
  require_finite(obj.total, "train_step loss");
  backward(obj.total);
  opt.detector.step(m.detector_parameters());
  if (m.adversarial()) opt.discriminator.step(m.disc.parameters());
  return stats;
}

/// Class logits and boxes without recording a graph.
inline std::vector<BoxPrediction> predict(const Model& m, const Tensor& image) {
  NoGradGuard guard;
  return detect(m, extract_features(m, image)).values();
}

/// Domain probability for one image without recording a graph.
inline double domain_probability(const Model& m, const Discriminator& d, const Tensor& image) {
  NoGradGuard guard;
  return discriminator_forward(aligned_features(m, extract_features(m, image)), d).item();
}

}  // namespace hamalign
