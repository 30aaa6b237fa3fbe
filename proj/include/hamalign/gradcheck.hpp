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

// Central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hamalign/tensor.hpp"

namespace hamalign {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double autodiff = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  std::size_t one_sided = 0;  // stencil crossed a kink on one side
  std::size_t skipped = 0;    // kinks on both sides; not compared
};

/// Compares d(build())/d(inputs) from backward() against
/// (f(x + h e_i) - f(x - h e_i)) / (2h) coordinate by coordinate and returns
/// the largest |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
///
/// Piecewise operations log the branch each element takes. When one side
/// of the stencil lands on a different branch than the base point, the
/// one-sided difference from the other side is used instead; when both do,
/// the coordinate is skipped. Both cases are counted in the result.
///
/// `inputs` must be leaves with requires_grad; they are perturbed in place
/// and restored. When `max_coords` is non-zero, at most that many evenly
/// strided coordinates per tensor are probed. Leaf grads of every tensor in
/// the graph are accumulated by the analytic pass as a side effect.
inline GradCheckResult grad_check(const std::function<Tensor()>& build, std::vector<Tensor> inputs,
                                  double h = 1e-5, std::size_t max_coords = 0) {
  if (!(h > 0.0)) throw UsageError("grad_check: step must be positive");
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) throw UsageError("grad_check: input does not require grad");
    t.zero_grad();
  }
  std::uint64_t base_branches = 0;
  Tensor loss;
  {
    BranchScope scope;
    loss = build();
    base_branches = scope.hash();
  }
  const double base = loss.item();
  if (!std::isfinite(base)) throw NumericFault("grad_check: non-finite loss at the base point");
  backward(loss);

  struct Probe {
    double value;
    bool same_branch;
  };
  auto evaluate = [&](std::size_t ti, std::size_t i) {
    NoGradGuard guard;
    BranchScope scope;
    const double value = build().item();
    if (!std::isfinite(value)) {
      throw NumericFault("grad_check: non-finite value when perturbing tensor " + std::to_string(ti) +
                         " coordinate " + std::to_string(i));
    }
    return Probe{value, scope.hash() == base_branches};
  };

  GradCheckResult result;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& x = inputs[ti];
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    const std::size_t n = x.size();
    const std::size_t step = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t i = 0; i < n; i += step) {
      auto data = x.mutable_data();
      const double original = data[i];
      data[i] = original + h;
      const Probe plus = evaluate(ti, i);
      data[i] = original - h;
      const Probe minus = evaluate(ti, i);
      data[i] = original;
      double numeric;
      if (plus.same_branch && minus.same_branch) {
        numeric = (plus.value - minus.value) / (2.0 * h);
      } else if (plus.same_branch) {
        numeric = (plus.value - base) / h;
        ++result.one_sided;
      } else if (minus.same_branch) {
        numeric = (base - minus.value) / h;
        ++result.one_sided;
      } else {
        ++result.skipped;
        continue;
      }
      const double ad = analytic[i];
      if (!std::isfinite(ad)) {
        throw NumericFault("grad_check: non-finite analytic gradient at tensor " + std::to_string(ti) +
                           " coordinate " + std::to_string(i));
      }
      const double err = std::fabs(ad - numeric) / std::max({1.0, std::fabs(ad), std::fabs(numeric)});
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = ti;
        result.worst_index = i;
        result.autodiff = ad;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

/// Single-input form: `build` receives the probed tensor.
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& build, const Tensor& x,
                                  double h = 1e-5) {
  Tensor probe = x.requires_grad() ? x : x.detach(true);
  return grad_check([&] { return build(probe); }, {probe}, h);
}

}  // namespace hamalign
