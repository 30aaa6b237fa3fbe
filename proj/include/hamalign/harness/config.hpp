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

// Experiment configuration and its JSON form. Readers are strict: unknown
// keys and wrongly typed values are configuration errors.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hamalign/harness/scene.hpp"
#include "hamalign/model.hpp"

namespace hamalign::harness {

using Json = nlohmann::ordered_json;

inline const char* param_mode_name(ParamMode m) { return m == ParamMode::paper_literal ? "paper-literal" : "broadcast"; }

inline ParamMode parse_param_mode(const std::string& s) {
  if (s == "paper-literal") return ParamMode::paper_literal;
  if (s == "broadcast") return ParamMode::broadcast;
  throw ConfigError("param_mode: expected \"paper-literal\" or \"broadcast\", got \"" + s + "\"");
}

inline const char* level_norm_name(LevelNorm n) { return n == LevelNorm::softmax ? "softmax" : "sigmoid"; }

inline LevelNorm parse_level_norm(const std::string& s) {
  if (s == "softmax") return LevelNorm::softmax;
  if (s == "sigmoid") return LevelNorm::sigmoid;
  throw ConfigError("level_norm: expected \"softmax\" or \"sigmoid\", got \"" + s + "\"");
}

namespace detail {

class StrictReader {
 public:
  StrictReader(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ConfigError(what_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(what_ + ": field \"" + key + "\" has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(what_ + ": unknown field \"" + key + "\"");
    }
  }

 private:
  const Json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json ham_config_to_json(const HamConfig& c) {
  return Json{{"K", c.K},
              {"L", c.L},
              {"C", c.C},
              {"gn_eps", c.gn_eps},
              {"param_mode", param_mode_name(c.param_mode)},
              {"shuffle_sub_groups", c.shuffle_sub_groups}};
}

inline HamConfig ham_config_from_json(const Json& j) {
  HamConfig c;
  std::string mode = param_mode_name(c.param_mode);
  detail::StrictReader r(j, "ham config");
  r.get("K", c.K);
  r.get("L", c.L);
  r.get("C", c.C);
  r.get("gn_eps", c.gn_eps);
  r.get("param_mode", mode);
  r.get("shuffle_sub_groups", c.shuffle_sub_groups);
  r.finish();
  c.param_mode = parse_param_mode(mode);
  c.validate();
  return c;
}

struct TrainConfig {
  // model
  std::size_t K = 2;
  double lambda = 0.1;
  std::size_t L = 2;
  std::size_t C = 16;
  std::size_t N = 8;
  std::size_t num_classes = 3;
  std::size_t image_size = 32;
  // schedule
  std::size_t epochs = 30;
  std::size_t phase2_epoch = 25;
  double lr_phase1 = 1.0;
  double lr_phase2 = 0.1;
  std::uint64_t seed = 0;
  // alignment rows
  bool direct_align = false;
  bool cam_no_split = false;
  bool cam_no_shuffle = false;
  bool cam_full = false;
  bool lam = false;
  // declared defaults for quantities the method leaves open
  std::size_t batch_size = 8;
  std::size_t steps_per_epoch = 24;
  std::size_t eval_images = 256;
  std::size_t eval_every = 10;
  double grad_clip = 1.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double disc_weight_decay = 0.01;
  double disc_lr_scale = 0.1;
  double reversal_scale = 1.0;
  double no_object_weight = 0.1;
  double class_weight = 1.0;
  double box_weight = 1.0;
  bool match_log_prob = false;
  double gn_eps = 1e-5;
  std::string param_mode = "paper-literal";
  std::string level_norm = "softmax";
  std::size_t min_objects = 0;
  std::size_t max_objects = 3;
  double fog = 0.3;
  double blur_radius = 1.0;
  bool record_time = false;

  bool adversarial() const { return direct_align || cam_no_split || cam_no_shuffle || cam_full || lam; }

  /// Short label of the alignment row.
  std::string row_name() const {
    if (!adversarial()) return "source-only";
    if (direct_align) return "direct-align";
    std::string out;
    if (cam_no_split) out = "cam-no-split";
    if (cam_no_shuffle) out = "cam-no-shuffle";
    if (cam_full) out = "cam";
    if (lam) out += out.empty() ? "lam" : "+lam";
    return out;
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.detr.C = C;
    m.detr.L = L;
    m.detr.N = N;
    m.detr.num_classes = num_classes;
    m.detr.image_size = image_size;
    m.ham.K = cam_no_split ? 1 : K;
    m.ham.L = L;
    m.ham.C = C;
    m.ham.gn_eps = gn_eps;
    m.ham.param_mode = parse_param_mode(param_mode);
    m.ham.shuffle_sub_groups = cam_no_shuffle ? 1 : 2;
    m.level_norm = parse_level_norm(level_norm);
    if (direct_align) {
      m.align = {AlignmentPath::direct, false, false};
    } else if (adversarial()) {
      m.align = {AlignmentPath::attention, cam_no_split || cam_no_shuffle || cam_full, lam};
    }
    m.loss.no_object_weight = no_object_weight;
    m.loss.class_weight = class_weight;
    m.loss.box_weight = box_weight;
    m.loss.matching = {class_weight, box_weight, match_log_prob};
    return m;
  }

  GeneratorConfig generator() const {
    GeneratorConfig g;
    g.image_size = image_size;
    g.min_objects = min_objects;
    g.max_objects = max_objects;
    g.target.fog = fog;
    g.target.blur_radius = blur_radius;
    return g;
  }

  GrlConfig grl() const { return {lambda, reversal_scale}; }

  void validate() const {
    HamConfig h;
    h.K = K;
    h.L = L;
    h.C = C;
    h.gn_eps = gn_eps;
    h.validate();  // C divisible by 2K regardless of the row
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (phase2_epoch >= epochs) {
      throw ConfigError("train: phase2_epoch=" + std::to_string(phase2_epoch) + " must be < epochs=" +
                        std::to_string(epochs));
    }
    if (!(lr_phase1 > 0.0) || !(lr_phase2 > 0.0)) throw ConfigError("train: learning rates must be positive");
    if (batch_size == 0 || steps_per_epoch == 0) throw ConfigError("train: batch_size and steps_per_epoch must be >= 1");
    if (eval_images == 0 || eval_every == 0) throw ConfigError("train: eval_images and eval_every must be >= 1");
    if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
    if (weight_decay < 0.0 || disc_weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
    if (!(disc_lr_scale > 0.0)) throw ConfigError("train: disc_lr_scale must be positive");
    if (!(no_object_weight > 0.0)) throw ConfigError("train: no_object_weight must be positive");
    if (fog < 0.0 || fog > 1.0 || blur_radius < 0.0) throw ConfigError("train: need 0 <= fog <= 1 and blur_radius >= 0");
    if ((cam_no_split ? 1 : 0) + (cam_no_shuffle ? 1 : 0) + (cam_full ? 1 : 0) > 1) {
      throw ConfigError("train: at most one of cam_no_split, cam_no_shuffle, cam_full");
    }
    if (direct_align && (cam_no_split || cam_no_shuffle || cam_full || lam)) {
      throw ConfigError("train: direct_align bypasses the attention module and excludes cam/lam flags");
    }
    grl().validate();
    parse_level_norm(level_norm);
    generator().validate();
    model_config().validate();
  }
};

inline Json train_config_to_json(const TrainConfig& c) {
  return Json{{"K", c.K},
              {"lambda", c.lambda},
              {"L", c.L},
              {"C", c.C},
              {"N", c.N},
              {"num_classes", c.num_classes},
              {"image_size", c.image_size},
              {"epochs", c.epochs},
              {"phase2_epoch", c.phase2_epoch},
              {"lr_phase1", c.lr_phase1},
              {"lr_phase2", c.lr_phase2},
              {"seed", c.seed},
              {"direct_align", c.direct_align},
              {"cam_no_split", c.cam_no_split},
              {"cam_no_shuffle", c.cam_no_shuffle},
              {"cam_full", c.cam_full},
              {"lam", c.lam},
              {"batch_size", c.batch_size},
              {"steps_per_epoch", c.steps_per_epoch},
              {"eval_images", c.eval_images},
              {"eval_every", c.eval_every},
              {"grad_clip", c.grad_clip},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"disc_weight_decay", c.disc_weight_decay},
              {"disc_lr_scale", c.disc_lr_scale},
              {"reversal_scale", c.reversal_scale},
              {"no_object_weight", c.no_object_weight},
              {"class_weight", c.class_weight},
              {"box_weight", c.box_weight},
              {"match_log_prob", c.match_log_prob},
              {"gn_eps", c.gn_eps},
              {"param_mode", c.param_mode},
              {"level_norm", c.level_norm},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"fog", c.fog},
              {"blur_radius", c.blur_radius},
              {"record_time", c.record_time}};
}

/// Missing fields keep their defaults; the result is validated.
inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  detail::StrictReader r(j, "train config");
  r.get("K", c.K);
  r.get("lambda", c.lambda);
  r.get("L", c.L);
  r.get("C", c.C);
  r.get("N", c.N);
  r.get("num_classes", c.num_classes);
  r.get("image_size", c.image_size);
  r.get("epochs", c.epochs);
  r.get("phase2_epoch", c.phase2_epoch);
  r.get("lr_phase1", c.lr_phase1);
  r.get("lr_phase2", c.lr_phase2);
  r.get("seed", c.seed);
  r.get("direct_align", c.direct_align);
  r.get("cam_no_split", c.cam_no_split);
  r.get("cam_no_shuffle", c.cam_no_shuffle);
  r.get("cam_full", c.cam_full);
  r.get("lam", c.lam);
  r.get("batch_size", c.batch_size);
  r.get("steps_per_epoch", c.steps_per_epoch);
  r.get("eval_images", c.eval_images);
  r.get("eval_every", c.eval_every);
  r.get("grad_clip", c.grad_clip);
  r.get("momentum", c.momentum);
  r.get("weight_decay", c.weight_decay);
  r.get("disc_weight_decay", c.disc_weight_decay);
  r.get("disc_lr_scale", c.disc_lr_scale);
  r.get("reversal_scale", c.reversal_scale);
  r.get("no_object_weight", c.no_object_weight);
  r.get("class_weight", c.class_weight);
  r.get("box_weight", c.box_weight);
  r.get("match_log_prob", c.match_log_prob);
  r.get("gn_eps", c.gn_eps);
  r.get("param_mode", c.param_mode);
  r.get("level_norm", c.level_norm);
  r.get("min_objects", c.min_objects);
  r.get("max_objects", c.max_objects);
  r.get("fog", c.fog);
  r.get("blur_radius", c.blur_radius);
  r.get("record_time", c.record_time);
  r.finish();
  c.validate();
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

inline TrainConfig load_train_config(const std::string& path) { return train_config_from_json(read_json_file(path)); }

}  // namespace hamalign::harness
