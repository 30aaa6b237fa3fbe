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

// Straight-line reference for coordinate attention written with plain loops
// over std::vector. Shares no code with the library's tensor operations.

#include <cmath>
#include <cstddef>
#include <vector>

namespace hamalign::test {

struct CamOracleInput {
  std::size_t C, H, W, K, sub_groups;
  double eps;
  bool broadcast;            // w_s/b_s hold one value per channel
  std::vector<double> f, p;  // C*H*W
  std::vector<double> w_s, b_s, w_c, b_c;
};

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline std::vector<double> cam_oracle(const CamOracleInput& in) {
  const std::size_t hw = in.H * in.W;
  const std::size_t half = in.C / (2 * in.K);
  const std::size_t width = 2 * half;
  std::vector<double> out(in.C * hw);
  for (std::size_t k = 0; k < in.K; ++k) {
    std::vector<double> group(width * hw);
    for (std::size_t j = 0; j < half; ++j) {
      const std::size_t c1 = k * width + j;
      const std::size_t c2 = k * width + half + j;
      // spatial branch: per-channel normalisation of p, affine, logistic
      double m = 0.0;
      for (std::size_t i = 0; i < hw; ++i) m += in.p[c1 * hw + i];
      m /= static_cast<double>(hw);
      double v = 0.0;
      for (std::size_t i = 0; i < hw; ++i) v += (in.p[c1 * hw + i] - m) * (in.p[c1 * hw + i] - m);
      v /= static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) {
        const double z = (in.p[c1 * hw + i] - m) / std::sqrt(v + in.eps);
        const std::size_t wi = in.broadcast ? j : j * hw + i;
        const double a = logistic(in.w_s[wi] * z + in.b_s[wi]);
        group[j * hw + i] = in.f[c1 * hw + i] * a;
      }
      // channel branch: pooled p, affine, logistic
      double pooled = 0.0;
      for (std::size_t i = 0; i < hw; ++i) pooled += in.p[c2 * hw + i];
      pooled /= static_cast<double>(hw);
      const double a = logistic(in.w_c[j] * pooled + in.b_c[j]);
      for (std::size_t i = 0; i < hw; ++i) group[(half + j) * hw + i] = in.f[c2 * hw + i] * a;
    }
    // shuffle: view as (sub_groups, width/sub_groups), transpose, flatten
    const std::size_t per = width / in.sub_groups;
    for (std::size_t g = 0; g < in.sub_groups; ++g) {
      for (std::size_t q = 0; q < per; ++q) {
        const std::size_t src = g * per + q;
        const std::size_t dst = q * in.sub_groups + g;
        for (std::size_t i = 0; i < hw; ++i) out[(k * width + dst) * hw + i] = group[src * hw + i];
      }
    }
  }
  return out;
}

}  // namespace hamalign::test
