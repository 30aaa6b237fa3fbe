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

// Feature-map operations over single CxHxW images.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hamalign/ops.hpp"

namespace hamalign {

/// Spatial size of one level.
struct LevelSize {
  std::size_t h, w;
};

namespace detail {

inline void require_map(const char* op, const Tensor& x) {
  if (x.rank() != 3) throw DimensionError(std::string(op) + ": expected CxHxW, got " + shape_str(x.shape()));
}

}  // namespace detail

/// Direct 2-D cross-correlation with zero padding. Odd kernels are the
/// norm here but even kernels are accepted.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                     std::size_t pad) {
  detail::require_map("conv2d", input);
  if (weight.rank() != 4 || weight.dim(1) != input.dim(0) || weight.dim(2) != weight.dim(3)) {
    throw_dims("conv2d", input.shape(), weight.shape());
  }
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (h + 2 * pad < k || w + 2 * pad < k) throw_dims("conv2d", input.shape(), weight.shape());
  if (bias.size() != cout) throw_dims("conv2d", weight.shape(), bias.shape());
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (w + 2 * pad - k) / stride + 1;

  // Unfold patches into a (cin*k*k) x (oh*ow) matrix so both passes are
  // plain matrix products.
  const std::size_t patch = cin * k * k, positions = oh * ow;
  std::vector<double> cols(patch * positions, 0.0);
  {
    const double* x = input.data().data();
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          double* crow = cols.data() + ((ci * k + ki) * k + kj) * positions;
          for (std::size_t oi = 0; oi < oh; ++oi) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* xr = x + (ci * h + static_cast<std::size_t>(ii)) * w;
            for (std::size_t oj = 0; oj < ow; ++oj) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - static_cast<std::ptrdiff_t>(pad);
              if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
              crow[oi * ow + oj] = xr[jj];
            }
          }
        }
      }
    }
  }
  std::vector<double> out(cout * positions);
  const double* b = bias.data().data();
  for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.data() + co * positions, positions, b[co]);
  detail::gemm_acc(weight.data().data(), cols.data(), out.data(), cout, patch, positions);
  return make_result(
      "conv2d", {cout, oh, ow}, std::move(out), {input, weight, bias},
      [=, cols = std::move(cols)](detail::Node& self) {
        auto& xin = detail::input(self, 0);
        auto& win = detail::input(self, 1);
        auto& bin = detail::input(self, 2);
        const double* g = self.grad.data();
        if (bin.requires_grad) {
          double* gb = bin.grad_buffer();
          for (std::size_t co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < positions; ++i) acc += g[co * positions + i];
            gb[co] += acc;
          }
        }
        // dW = G cols^T
        if (win.requires_grad) detail::gemm_nt_acc(g, cols.data(), win.grad_buffer(), cout, positions, patch);
        if (!xin.requires_grad) return;
        // dcols = W^T G, folded back onto the input
        std::vector<double> gcols(patch * positions, 0.0);
        detail::gemm_tn_acc(win.data.data(), g, gcols.data(), cout, patch, positions);
        double* gx = xin.grad_buffer();
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
              const double* crow = gcols.data() + ((ci * k + ki) * k + kj) * positions;
              for (std::size_t oi = 0; oi < oh; ++oi) {
                const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                double* gr = gx + (ci * h + static_cast<std::size_t>(ii)) * w;
                for (std::size_t oj = 0; oj < ow; ++oj) {
                  const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                  if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                  gr[jj] += crow[oi * ow + oj];
                }
              }
            }
          }
        }
      });
}

/// Group normalisation without affine terms: (x - mu) / sqrt(var + eps) over
/// each group of C/num_groups channels and all spatial positions. A group
/// whose values are all equal maps to exact zeros.
inline Tensor group_norm(const Tensor& x, std::size_t num_groups, double eps = 1e-5) {
  detail::require_map("group_norm", x);
  const std::size_t c = x.dim(0);
  if (num_groups == 0 || c % num_groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible by " +
                      std::to_string(num_groups) + " groups");
  }
  if (!(eps > 0.0)) throw ConfigError("group_norm: eps must be positive");
  const std::size_t n = x.size() / num_groups;
  const auto d = x.data();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(num_groups);
  for (std::size_t g = 0; g < num_groups; ++g) {
    const double* xs = d.data() + g * n;
    double lo = xs[0], hi = xs[0], s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += xs[i];
      lo = std::min(lo, xs[i]);
      hi = std::max(hi, xs[i]);
    }
    const double mu = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (xs[i] - mu) * (xs[i] - mu);
    v /= static_cast<double>(n);
    if (lo == hi) v = 0.0;
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[g] = is;
    for (std::size_t i = 0; i < n; ++i) out[g * n + i] = lo == hi ? 0.0 : (xs[i] - mu) * is;
  }
  return make_result("group_norm", x.shape(), std::move(out), {x}, [n, num_groups, inv_std](detail::Node& self) {
    auto& xin = detail::input(self, 0);
    double* gx = xin.grad_buffer();
    const double* y = self.data.data();
    const double* g = self.grad.data();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t grp = 0; grp < num_groups; ++grp) {
      const std::size_t base = grp * n;
      double gmean = 0.0, gy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        gmean += g[base + i];
        gy += g[base + i] * y[base + i];
      }
      gmean *= inv_n;
      gy *= inv_n;
      for (std::size_t i = 0; i < n; ++i) {
        gx[base + i] += inv_std[grp] * (g[base + i] - gmean - y[base + i] * gy);
      }
    }
  });
}

/// Cx H x W -> C x 1 x 1 spatial mean.
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_map("global_avg_pool", x);
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const auto d = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += d[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  return make_result("global_avg_pool", {c, 1, 1}, std::move(out), {x}, [hw](detail::Node& self) {
    auto& xin = detail::input(self, 0);
    double* gx = xin.grad_buffer();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t ch = 0; ch < self.grad.size(); ++ch) {
      const double gv = self.grad[ch] * inv;
      for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += gv;
    }
  });
}

/// Non-overlapping `factor` x `factor` average pooling (integer downscale).
inline Tensor avg_pool(const Tensor& x, std::size_t factor) {
  detail::require_map("avg_pool", x);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (factor == 0 || h % factor != 0 || w % factor != 0) {
    throw DimensionError("avg_pool: factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
  }
  if (factor == 1) return x;
  const std::size_t oh = h / factor, ow = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  const auto d = x.data();
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out[(ch * oh + i / factor) * ow + j / factor] += d[(ch * h + i) * w + j];
  for (double& v : out) v *= inv;
  return make_result("avg_pool", {c, oh, ow}, std::move(out), {x}, [=](detail::Node& self) {
    auto& xin = detail::input(self, 0);
    double* gx = xin.grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[(ch * h + i) * w + j] += inv * self.grad[(ch * oh + i / factor) * ow + j / factor];
  });
}

/// Channel order produced by viewing C channels as (sub_groups, C/sub_groups),
/// transposing and flattening. Entry o names the source channel of output o.
inline std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t sub_groups) {
  if (sub_groups == 0 || channels % sub_groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(sub_groups) + " sub-groups");
  }
  const std::size_t per = channels / sub_groups;
  std::vector<std::size_t> perm(channels);
  for (std::size_t i = 0; i < sub_groups; ++i)
    for (std::size_t j = 0; j < per; ++j) perm[j * sub_groups + i] = i * per + j;
  return perm;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t o = 0; o < perm.size(); ++o) inv[perm[o]] = o;
  return inv;
}

inline Tensor channel_shuffle(const Tensor& x, std::size_t sub_groups = 2) {
  return permute_channels(x, channel_shuffle_permutation(x.dim(0), sub_groups));
}

}  // namespace hamalign
