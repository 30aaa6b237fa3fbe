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

// Average precision at an IoU threshold, all-point (continuous)
// interpolation of the precision-recall curve.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "hamalign/set_detect.hpp"

namespace hamalign::harness {

struct Detection {
  std::size_t image = 0;
  std::size_t class_id = 1;
  double score = 0.0;
  Box box;
};

/// One detection per query: the most probable object class and its
/// probability as the score.
inline std::vector<Detection> to_detections(const std::vector<BoxPrediction>& preds, std::size_t image) {
  std::vector<Detection> out;
  for (const BoxPrediction& p : preds) {
    const auto prob = softmax_values(p.class_logits);
    std::size_t best = 1;
    for (std::size_t k = 2; k < prob.size(); ++k) {
      if (prob[k] > prob[best]) best = k;
    }
    out.push_back({image, best, prob[best], p.box});
  }
  return out;
}

/// AP of one class. Detections are ranked by score (stable, so equal
/// scores keep input order) and each greedily claims the unmatched
/// ground truth of its image with the highest IoU >= threshold. Returns
/// nullopt when the class has no ground truth.
inline std::optional<double> average_precision(std::vector<Detection> dets,
                                               const std::vector<std::vector<GroundTruthObject>>& truth,
                                               std::size_t class_id, double iou_threshold = 0.5) {
  std::size_t positives = 0;
  std::vector<std::vector<bool>> claimed(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    claimed[i].assign(truth[i].size(), false);
    for (const auto& g : truth[i]) positives += g.class_id == class_id;
  }
  if (positives == 0) return std::nullopt;
  std::erase_if(dets, [class_id](const Detection& d) { return d.class_id != class_id; });
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < dets.size(); ++r) {
    const Detection& d = dets[r];
    if (d.image >= truth.size()) throw UsageError("average_precision: detection for unknown image");
    double best = iou_threshold;
    std::ptrdiff_t hit = -1;
    for (std::size_t g = 0; g < truth[d.image].size(); ++g) {
      const auto& gt = truth[d.image][g];
      if (gt.class_id != class_id || claimed[d.image][g]) continue;
      const double iou = box_iou(d.box, gt.box);
      if (iou >= best) {
        best = iou;
        hit = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (hit >= 0) {
      claimed[d.image][static_cast<std::size_t>(hit)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  // precision envelope from the right, then area under the step curve
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// Mean AP over classes 1..num_classes that have ground truth; nullopt
/// when no class does.
inline std::optional<double> mean_average_precision(const std::vector<Detection>& dets,
                                                    const std::vector<std::vector<GroundTruthObject>>& truth,
                                                    std::size_t num_classes, double iou_threshold = 0.5) {
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 1; c <= num_classes; ++c) {
    if (const auto ap = average_precision(dets, truth, c, iou_threshold)) {
      total += *ap;
      ++classes;
    }
  }
  if (classes == 0) return std::nullopt;
  return total / static_cast<double>(classes);
}

}  // namespace hamalign::harness
