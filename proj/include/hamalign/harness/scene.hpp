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

// Synthetic two-domain scenes: squares, disks and triangles on a noisy
// background. Target scenes get a brightness lift and a Gaussian blur.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hamalign/model.hpp"
#include "hamalign/rng.hpp"
#include "hamalign/set_detect.hpp"

namespace hamalign::harness {

enum class Domain { source, target };

inline const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw UsageError("unknown domain '" + s + "' (expected source or target)");
}

inline constexpr std::size_t kSquare = 1, kDisk = 2, kTriangle = 3;

struct RenderParams {
  double background = 0.1;
  double noise_amplitude = 0.03;
  double fog = 0.0;          // additive brightness lift
  double blur_radius = 0.0;  // Gaussian sigma in pixels; 0 disables
  double off_hue = 0.3;      // weight of the non-dominant colour channels
};

struct SceneSpec {
  std::vector<GroundTruthObject> objects;
  Domain domain = Domain::source;
  RenderParams render;
};

struct GeneratorConfig {
  std::size_t image_size = 32;
  std::size_t min_objects = 0;
  std::size_t max_objects = 3;
  double min_extent = 0.25;  // object side relative to the image
  double max_extent = 0.35;
  double max_overlap_iou = 0.1;
  RenderParams source;
  RenderParams target{0.1, 0.03, 0.3, 1.0, 0.3};

  void validate() const {
    if (image_size == 0) throw ConfigError("generator: image_size must be positive");
    if (min_objects > max_objects || max_objects > 5) {
      throw ConfigError("generator: need min_objects <= max_objects <= 5");
    }
    if (!(min_extent > 0.0) || min_extent > max_extent || max_extent > 1.0) {
      throw ConfigError("generator: need 0 < min_extent <= max_extent <= 1");
    }
  }

  const RenderParams& render(Domain d) const { return d == Domain::source ? source : target; }
};

namespace detail {

inline bool covers(std::size_t class_id, const Box& b, double x, double y) {
  const double x0 = b.cx - b.w / 2, y0 = b.cy - b.h / 2;
  const double u = (x - x0) / b.w, v = (y - y0) / b.h;  // box-local, [0,1] inside
  if (u < 0 || u > 1 || v < 0 || v > 1) return false;
  switch (class_id) {
    case kSquare:
      return true;
    case kDisk:
      return (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
    case kTriangle:  // apex at top centre, base along the bottom edge
      return std::fabs(u - 0.5) <= 0.5 * v;
    default:
      throw InputError("scene: unknown class " + std::to_string(class_id));
  }
}

inline std::vector<double> gaussian_blur(const std::vector<double>& img, std::size_t channels, std::size_t n,
                                         double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    total += kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  for (double& k : kernel) k /= total;
  auto clampi = [n](int i) { return static_cast<std::size_t>(std::clamp(i, 0, static_cast<int>(n) - 1)); };
  std::vector<double> tmp(img.size()), out(img.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = img.data() + c * n * n;
    double* mid = tmp.data() + c * n * n;
    double* dst = out.data() + c * n * n;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * src[y * n + clampi(static_cast<int>(x) + k)];
        }
        mid[y * n + x] = acc;
      }
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * mid[clampi(static_cast<int>(y) + k) * n + x];
        }
        dst[y * n + x] = acc;
      }
  }
  return out;
}

}  // namespace detail

/// Rasterises a scene to a 3 x n x n image with pixel values in [0,1].
/// Pixels are tested at their centres.
inline Tensor render_scene(const SceneSpec& scene, std::size_t n, Rng& rng) {
  const RenderParams& r = scene.render;
  std::vector<double> img(3 * n * n, r.background);
  for (const GroundTruthObject& obj : scene.objects) {
    // each class has a dominant hue; brightness and channel jitter vary per object
    const double level = rng.uniform(0.7, 1.0);
    double tint[3];
    for (std::size_t c = 0; c < 3; ++c) {
      const double hue = c + 1 == obj.class_id ? 1.0 : r.off_hue;
      tint[c] = std::clamp(level * hue + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    }
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double px = (static_cast<double>(x) + 0.5) / static_cast<double>(n);
        const double py = (static_cast<double>(y) + 0.5) / static_cast<double>(n);
        if (!detail::covers(obj.class_id, obj.box, px, py)) continue;
        for (std::size_t c = 0; c < 3; ++c) img[(c * n + y) * n + x] = tint[c];
      }
    }
  }
  if (r.fog > 0.0) {
    for (double& v : img) v = std::min(1.0, v + r.fog);
  }
  if (r.blur_radius > 0.0) img = detail::gaussian_blur(img, 3, n, r.blur_radius);
  for (double& v : img) v = std::clamp(v + r.noise_amplitude * rng.uniform(-1.0, 1.0), 0.0, 1.0);
  return Tensor::from({3, n, n}, std::move(img));
}

/// Random object layout: square extents, limited mutual overlap, boxes
/// inside the unit square.
inline std::vector<GroundTruthObject> random_objects(const GeneratorConfig& cfg, Rng& rng) {
  const std::size_t count = cfg.min_objects + rng.below(cfg.max_objects - cfg.min_objects + 1);
  std::vector<GroundTruthObject> out;
  for (std::size_t attempt = 0; out.size() < count && attempt < 100; ++attempt) {
    const double e = rng.uniform(cfg.min_extent, cfg.max_extent);
    const Box b{rng.uniform(e / 2, 1 - e / 2), rng.uniform(e / 2, 1 - e / 2), e, e};
    const std::size_t cls = 1 + rng.below(3);
    bool clear = true;
    for (const auto& o : out) clear = clear && box_iou(o.box, b) <= cfg.max_overlap_iou;
    if (clear) out.push_back({cls, b});
  }
  return out;
}

/// Labelled scenes of one domain. Target labels are kept for evaluation
/// only; training code strips them (see gen_domain_batch).
inline std::vector<Sample> generate_scenes(Domain domain, std::size_t count, Rng& rng, const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec spec{random_objects(cfg, rng), domain, cfg.render(domain)};
    Tensor image = render_scene(spec, cfg.image_size, rng);
    out.push_back({std::move(image), std::move(spec.objects)});
  }
  return out;
}

/// Training batch: source scenes carry labels, target scenes do not.
inline std::vector<Sample> gen_domain_batch(Domain domain, std::size_t count, Rng& rng, const GeneratorConfig& cfg) {
  if (count == 0) throw UsageError("gen_domain_batch: count must be >= 1");
  auto batch = generate_scenes(domain, count, rng, cfg);
  if (domain == Domain::target) {
    for (auto& s : batch) s.objects.clear();
  }
  return batch;
}

}  // namespace hamalign::harness
