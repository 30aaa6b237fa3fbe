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

// Training orchestration, evaluation, K sweep, ablation lattice and
// attention dumps.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hamalign/harness/config.hpp"
#include "hamalign/harness/metrics.hpp"
#include "hamalign/harness/pgm.hpp"
#include "hamalign/harness/scene.hpp"
#include "hamalign/model.hpp"

namespace hamalign::harness {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr const char* kMetricsHeader = "epoch,l_det,l_adv,disc_acc,target_ap,source_ap,seconds";

/// One row of the metrics CSV. Quantities that were not measured in an
/// epoch (no alignment path, or evaluation skipped) are NaN.
struct MetricsRecord {
  std::size_t epoch = 0;
  double l_det = kNaN;
  double l_adv = kNaN;
  double disc_acc = kNaN;
  double target_ap = kNaN;
  double source_ap = kNaN;
  double seconds = 0.0;
};

inline std::string format_fixed(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.epoch) + "," + format_fixed(r.l_det) + "," + format_fixed(r.l_adv) + "," +
           format_fixed(r.disc_acc) + "," + format_fixed(r.target_ap) + "," + format_fixed(r.source_ap) + "," +
           format_fixed(r.seconds) + "\n";
  }
  return out;
}

/// Held-out scenes of both domains, labelled, from the evaluation streams.
struct EvalSet {
  std::vector<Sample> source;
  std::vector<Sample> target;

  static EvalSet make(const TrainConfig& cfg) {
    const Rng root(cfg.seed);
    Rng s = root.split(stream::source_eval);
    Rng t = root.split(stream::target_eval);
    return {generate_scenes(Domain::source, cfg.eval_images, s, cfg.generator()),
            generate_scenes(Domain::target, cfg.eval_images, t, cfg.generator())};
  }
};

struct EvalResult {
  std::optional<double> source_ap;
  std::optional<double> target_ap;
  std::optional<double> disc_acc;  // only with an alignment path
};

/// AP@iou of the detector on labelled samples; nullopt without ground truth.
inline std::optional<double> evaluate_ap(const Model& m, const std::vector<Sample>& samples,
                                         double iou_threshold = 0.5) {
  std::vector<Detection> dets;
  std::vector<std::vector<GroundTruthObject>> truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const Detection& d : to_detections(predict(m, samples[i].image), i)) dets.push_back(d);
    truth.push_back(samples[i].objects);
  }
  return mean_average_precision(dets, truth, m.cfg.detr.num_classes, iou_threshold);
}

/// evaluate_ap on count fresh scenes of one domain drawn from rng.
inline std::optional<double> evaluate_ap(const Model& m, Domain domain, std::size_t count, Rng& rng,
                                         const GeneratorConfig& gen, double iou_threshold = 0.5) {
  return evaluate_ap(m, generate_scenes(domain, count, rng, gen), iou_threshold);
}

/// Fraction of samples a discriminator assigns to their own domain
/// (probability of "source" above one half for source samples, below for
/// target samples).
inline double domain_accuracy(const std::vector<double>& p_source, const std::vector<double>& p_target) {
  std::size_t correct = 0;
  for (double p : p_source) correct += p > 0.5 ? 1 : 0;
  for (double p : p_target) correct += p < 0.5 ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(p_source.size() + p_target.size());
}

inline EvalResult evaluate(const Model& m, const EvalSet& set) {
  EvalResult out;
  out.source_ap = evaluate_ap(m, set.source);
  out.target_ap = evaluate_ap(m, set.target);
  if (m.adversarial()) {
    std::vector<double> ps, pt;
    for (const Sample& s : set.source) ps.push_back(domain_probability(m, m.disc, s.image));
    for (const Sample& s : set.target) pt.push_back(domain_probability(m, m.disc, s.image));
    out.disc_acc = domain_accuracy(ps, pt);
  }
  return out;
}

struct TrainResult {
  Model model;
  std::vector<MetricsRecord> records;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

/// Two-phase SGD schedule. Each epoch draws steps_per_epoch paired
/// batches of fresh scenes (labelled source, unlabelled target) from the
/// training streams; evaluation runs every eval_every epochs and always
/// after the last one.
inline TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const Rng root(cfg.seed);
  Rng source_rng = root.split(stream::source_train);
  Rng target_rng = root.split(stream::target_train);
  const GeneratorConfig gen = cfg.generator();
  const GrlConfig grl_cfg = cfg.grl();
  const EvalSet eval_set = EvalSet::make(cfg);

  TrainResult result{Model::init(cfg.model_config(), cfg.seed), {}};
  Model& m = result.model;
  Optimizers opt;
  opt.detector.clip_norm = opt.discriminator.clip_norm = cfg.grad_clip;
  opt.detector.momentum = opt.discriminator.momentum = cfg.momentum;
  opt.detector.weight_decay = cfg.weight_decay;
  opt.discriminator.weight_decay = cfg.disc_weight_decay;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch < cfg.phase2_epoch ? cfg.lr_phase1 : cfg.lr_phase2;
    opt.detector.learning_rate = lr;
    opt.discriminator.learning_rate = lr * cfg.disc_lr_scale;
    double det_sum = 0.0, adv_sum = 0.0;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      const auto source = gen_domain_batch(Domain::source, cfg.batch_size, source_rng, gen);
      std::vector<Sample> target;
      if (m.adversarial()) target = gen_domain_batch(Domain::target, cfg.batch_size, target_rng, gen);
      const StepStats stats = train_step(m, source, target, grl_cfg, opt);
      det_sum += stats.l_det;
      adv_sum += stats.l_adv;
    }
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.l_det = det_sum / static_cast<double>(cfg.steps_per_epoch);
    rec.l_adv = m.adversarial() ? adv_sum / static_cast<double>(cfg.steps_per_epoch) : kNaN;
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      const EvalResult ev = evaluate(m, eval_set);
      rec.source_ap = ev.source_ap.value_or(kNaN);
      rec.target_ap = ev.target_ap.value_or(kNaN);
      rec.disc_acc = ev.disc_acc.value_or(kNaN);
    }
    if (cfg.record_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFile = "model.hamc";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kMetricsFile = "metrics.csv";

/// train() plus its artefacts: <out>/model.hamc, <out>/config.json and
/// <out>/metrics.csv.
inline TrainResult train_to_dir(const TrainConfig& cfg, const std::string& out_dir, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
  write_text_file((fs::path(out_dir) / kConfigFile).string(), train_config_to_json(cfg).dump(2) + "\n");
  TrainResult result = train(cfg, on_epoch);
  write_text_file((fs::path(out_dir) / kMetricsFile).string(), metrics_csv(result.records));
  save_checkpoint((fs::path(out_dir) / kCheckpointFile).string(), result.model.named());
  return result;
}

/// Rebuilds a trained model from a checkpoint and the config.json stored
/// next to it.
inline std::pair<TrainConfig, Model> load_trained(const std::string& ckpt_path) {
  const fs::path config_path = fs::path(ckpt_path).parent_path() / kConfigFile;
  if (!fs::exists(config_path)) throw IoError("no " + std::string(kConfigFile) + " next to " + ckpt_path);
  TrainConfig cfg = load_train_config(config_path.string());
  Model m = Model::init(cfg.model_config(), cfg.seed);
  std::vector<NamedTensor> params = m.named();
  restore_parameters(load_checkpoint(ckpt_path), params);
  return {cfg, m};
}

// ---------------------------------------------------------------------------
// Domain probe

struct ProbeConfig {
  std::size_t steps = 150;
  std::size_t batch_size = 8;
  double learning_rate = 0.1;
};

/// Level-averaged backbone features, detached.
inline Tensor plain_features(const Model& m, const Tensor& image) {
  NoGradGuard guard;
  return mean_levels(resample_to_coarsest(backbone_forward(image, m.detr.backbone, m.cfg.detr))).detach();
}

/// Trains a fresh discriminator to separate the domains from a model's
/// plain backbone features and returns its accuracy on the held-out set.
inline double probe_accuracy(const Model& m, const TrainConfig& cfg, const EvalSet& held_out,
                             const ProbeConfig& probe = {}) {
  const Rng root = Rng(cfg.seed).split(stream::probe);
  Discriminator d = Discriminator::init(m.cfg.detr.C, root.split(0), m.cfg.disc_slope);
  Rng source_rng = root.split(1);
  Rng target_rng = root.split(2);
  const GeneratorConfig gen = cfg.generator();
  Sgd opt;
  opt.learning_rate = probe.learning_rate;
  opt.clip_norm = 1.0;
  for (std::size_t step = 0; step < probe.steps; ++step) {
    std::vector<Tensor> ps, pt;
    for (const Sample& s : gen_domain_batch(Domain::source, probe.batch_size, source_rng, gen)) {
      ps.push_back(discriminator_forward(plain_features(m, s.image), d));
    }
    for (const Sample& s : gen_domain_batch(Domain::target, probe.batch_size, target_rng, gen)) {
      pt.push_back(discriminator_forward(plain_features(m, s.image), d));
    }
    backward(neg(adversarial_loss(ps, pt).value));
    opt.step(d.parameters());
  }
  NoGradGuard guard;
  std::vector<double> ps, pt;
  for (const Sample& s : held_out.source) ps.push_back(discriminator_forward(plain_features(m, s.image), d).item());
  for (const Sample& s : held_out.target) pt.push_back(discriminator_forward(plain_features(m, s.image), d).item());
  return domain_accuracy(ps, pt);
}

// ---------------------------------------------------------------------------
// Protocols

inline constexpr const char* kSweepHeader = "K,target_ap";

struct SweepRow {
  std::size_t K = 0;
  double target_ap = kNaN;
};

/// Trains once per valid K with the base seed. Invalid K values are
/// skipped with a warning on `log`.
inline std::vector<SweepRow> sweep_k(const TrainConfig& base, const std::vector<std::size_t>& k_values,
                                     std::ostream& log = std::cerr, const std::string& out_dir = "") {
  std::vector<SweepRow> rows;
  for (std::size_t k : k_values) {
    TrainConfig cfg = base;
    cfg.K = k;
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      log << "warning: skipping K=" << k << ": " << e.what() << "\n";
      continue;
    }
    const TrainResult r = out_dir.empty() ? train(cfg) : train_to_dir(cfg, (fs::path(out_dir) / ("K" + std::to_string(k))).string());
    rows.push_back({k, r.records.back().target_ap});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const SweepRow& r : rows) out += std::to_string(r.K) + "," + format_fixed(r.target_ap) + "\n";
  return out;
}

struct AblationRow {
  std::string name;
  TrainConfig cfg;
  MetricsRecord final;
};

/// Source-only baseline followed by the six alignment rows: direct
/// alignment, coordinate attention without split, without shuffle and
/// complete, level attention alone, and both attentions.
inline std::vector<TrainConfig> ablation_configs(const TrainConfig& base) {
  auto row = [&](bool direct, bool no_split, bool no_shuffle, bool full, bool lam) {
    TrainConfig c = base;
    c.direct_align = direct;
    c.cam_no_split = no_split;
    c.cam_no_shuffle = no_shuffle;
    c.cam_full = full;
    c.lam = lam;
    return c;
  };
  return {row(false, false, false, false, false), row(true, false, false, false, false),
          row(false, true, false, false, false),  row(false, false, true, false, false),
          row(false, false, false, true, false),  row(false, false, false, false, true),
          row(false, false, false, true, true)};
}

inline constexpr const char* kAblationHeader =
    "row,direct_align,cam_no_split,cam_no_shuffle,cam_full,lam,l_det,l_adv,disc_acc,target_ap,source_ap";

inline std::vector<AblationRow> ablate(const TrainConfig& base, const std::string& out_dir = "",
                                       std::ostream* log = nullptr) {
  std::vector<AblationRow> rows;
  for (const TrainConfig& cfg : ablation_configs(base)) {
    const std::string name = cfg.row_name();
    if (log) *log << "ablate: " << name << "\n";
    const TrainResult r =
        out_dir.empty() ? train(cfg) : train_to_dir(cfg, (fs::path(out_dir) / name).string());
    rows.push_back({name, cfg, r.records.back()});
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = std::string(kAblationHeader) + "\n";
  auto flag = [](bool b) { return b ? "1" : "0"; };
  for (const AblationRow& r : rows) {
    out += r.name + "," + flag(r.cfg.direct_align) + "," + flag(r.cfg.cam_no_split) + "," +
           flag(r.cfg.cam_no_shuffle) + "," + flag(r.cfg.cam_full) + "," + flag(r.cfg.lam) + "," +
           format_fixed(r.final.l_det) + "," + format_fixed(r.final.l_adv) + "," + format_fixed(r.final.disc_acc) +
           "," + format_fixed(r.final.target_ap) + "," + format_fixed(r.final.source_ap) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention dumps

struct AttentionMaps {
  struct Level {
    std::size_t height = 0, width = 0;
    std::vector<double> spatial;  // H_l x W_l, averaged over groups and channels
    std::vector<double> channel;  // C/2 channel-attention values, group order
  };
  std::vector<Level> levels;     // empty without coordinate attention
  std::vector<double> alpha;     // L x C level coefficients, empty without level attention
  std::size_t alpha_rows = 0, alpha_cols = 0;
};

inline AttentionMaps attention_maps(const Model& m, const Tensor& image) {
  if (m.cfg.align.path != AlignmentPath::attention) {
    throw UsageError("dump-attention: the model has no attention module");
  }
  NoGradGuard guard;
  HamTrace trace;
  aligned_features(m, extract_features(m, image), &trace);
  AttentionMaps out;
  const auto sizes = m.cfg.detr.level_sizes();
  if (m.cfg.align.cam) {
    for (std::size_t l = 0; l < trace.levels.size(); ++l) {
      const CamTrace& t = trace.levels[l];
      AttentionMaps::Level lv;
      lv.height = sizes[l].h;
      lv.width = sizes[l].w;
      const std::size_t hw = lv.height * lv.width;
      lv.spatial.assign(hw, 0.0);
      std::size_t maps = 0;
      for (const Tensor& s : t.spatial) {
        const std::size_t channels = s.size() / hw;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < hw; ++i) lv.spatial[i] += s[c * hw + i];
        }
        maps += channels;
      }
      for (double& v : lv.spatial) v /= static_cast<double>(maps);
      for (const Tensor& c : t.channel) {
        for (double v : c.data()) lv.channel.push_back(v);
      }
      out.levels.push_back(std::move(lv));
    }
  }
  if (m.cfg.align.lam && trace.alpha.defined()) {
    out.alpha = trace.alpha.values();
    out.alpha_rows = trace.alpha.dim(0);
    out.alpha_cols = trace.alpha.size() / out.alpha_rows;
  }
  return out;
}

/// Writes level{l}_spatial.pgm (H_l x W_l), level{l}_channel.pgm
/// ((C/2) wide, one row) and, with level attention, level_alpha.pgm (C wide,
/// L high).
/// Returns the paths written.
inline std::vector<std::string> dump_attention(const Model& m, const Tensor& image, const std::string& out_dir) {
  const AttentionMaps maps = attention_maps(m, image);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::vector<double>& values, std::size_t w, std::size_t h) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_pgm(path, normalize_to_gray(values, w, h));
    written.push_back(path);
  };
  for (std::size_t l = 0; l < maps.levels.size(); ++l) {
    const auto& lv = maps.levels[l];
    emit("level" + std::to_string(l) + "_spatial.pgm", lv.spatial, lv.width, lv.height);
    emit("level" + std::to_string(l) + "_channel.pgm", lv.channel, lv.channel.size(), 1);
  }
  if (!maps.alpha.empty()) emit("level_alpha.pgm", maps.alpha, maps.alpha_cols, maps.alpha_rows);
  return written;
}

}  // namespace hamalign::harness
