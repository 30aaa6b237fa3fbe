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

// Central-difference checks of every differentiable operation and of the
// full detector + attention + discriminator objective.

#include <functional>
#include <string>
#include <vector>

#include "hamalign/gradcheck.hpp"
#include "hamalign/harness/scene.hpp"
#include "hamalign/model.hpp"

namespace hamalign::harness {

struct NamedCheck {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, for kinks at the origin.
inline Tensor off_zero_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Projects a tensor to a scalar with fixed random weights so every output
// coordinate contributes a distinct gradient.
inline Tensor project(const Tensor& t, Rng& rng) {
  std::vector<double> w(t.size());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

}  // namespace detail

/// One check per differentiable operation on seeded random inputs.
inline std::vector<NamedCheck> op_grad_checks(std::uint64_t seed, double h = 1e-5) {
  using detail::off_zero_tensor;
  using detail::random_tensor;
  Rng rng = Rng(seed).split(0x6a);
  std::vector<NamedCheck> out;
  auto check = [&](const std::string& name, std::vector<Tensor> inputs,
                   const std::function<Tensor(const std::vector<Tensor>&)>& fn) {
    Rng proj_rng = rng.split(out.size() + 1);
    const std::uint64_t a = proj_rng.next(), b = proj_rng.next();
    auto build = [&, a, b] {
      Rng r = Rng(a).split(b);
      return detail::project(fn(inputs), r);
    };
    out.push_back({name, grad_check(build, inputs, h)});
  };

  check("add", {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, [](auto& x) { return add(x[0], x[1]); });
  check("add.channel", {random_tensor(rng, {3, 2, 2}), random_tensor(rng, {3, 1, 1})},
        [](auto& x) { return add(x[0], x[1]); });
  check("sub", {random_tensor(rng, {5}), random_tensor(rng, {5})}, [](auto& x) { return sub(x[0], x[1]); });
  check("mul", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& x) { return mul(x[0], x[1]); });
  check("mul.scalar", {random_tensor(rng, {2, 3}), random_tensor(rng, {1})}, [](auto& x) { return mul(x[0], x[1]); });
  check("scale", {random_tensor(rng, {4})}, [](auto& x) { return scale(x[0], -2.5); });
  check("add_scalar", {random_tensor(rng, {4})}, [](auto& x) { return add_scalar(x[0], 0.7); });
  check("add_n", {random_tensor(rng, {3}), random_tensor(rng, {3}), random_tensor(rng, {3})},
        [](auto& x) { return add_n({x[0], x[1], x[2]}); });
  check("sigmoid", {random_tensor(rng, {6}, -3.0, 3.0)}, [](auto& x) { return sigmoid(x[0]); });
  check("log", {random_tensor(rng, {6}, 0.5, 2.0)}, [](auto& x) { return log(x[0]); });
  check("leaky_relu", {off_zero_tensor(rng, {8})}, [](auto& x) { return leaky_relu(x[0], 0.2); });
  check("abs", {off_zero_tensor(rng, {8})}, [](auto& x) { return abs(x[0]); });
  check("clamp", {random_tensor(rng, {8}, 0.05, 0.45)}, [](auto& x) { return clamp(x[0], 0.0, 0.5); });
  check("sum", {random_tensor(rng, {2, 3})}, [](auto& x) { return mul(sum(x[0]), sum(x[0])); });
  check("mean", {random_tensor(rng, {2, 3})}, [](auto& x) { return mul(mean(x[0]), mean(x[0])); });
  check("reshape", {random_tensor(rng, {2, 6})}, [](auto& x) { return reshape(x[0], {3, 4}); });
  check("transpose", {random_tensor(rng, {2, 5})}, [](auto& x) { return transpose(x[0]); });
  check("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}, [](auto& x) { return matmul(x[0], x[1]); });
  check("linear", {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4}), random_tensor(rng, {5})},
        [](auto& x) { return linear(x[0], x[1], x[2]); });
  check("concat", {random_tensor(rng, {2, 2, 2}), random_tensor(rng, {1, 2, 2})},
        [](auto& x) { return concat({x[0], x[1]}); });
  check("slice", {random_tensor(rng, {4, 3})}, [](auto& x) { return slice(x[0], 1, 3); });
  check("permute_channels", {random_tensor(rng, {4, 2, 2})},
        [](auto& x) { return permute_channels(x[0], {2, 0, 3, 1}); });
  check("gather_rows", {random_tensor(rng, {4, 3})}, [](auto& x) { return gather_rows(x[0], {2, 0, 1, 1}); });
  check("softmax_axis0", {random_tensor(rng, {3, 4})}, [](auto& x) { return softmax_axis(x[0], 0); });
  check("softmax_axis1", {random_tensor(rng, {3, 4})}, [](auto& x) { return softmax_axis(x[0], 1); });
  check("log_softmax_axis", {random_tensor(rng, {3, 4})}, [](auto& x) { return log_softmax_axis(x[0], 1); });
  check("conv2d", {random_tensor(rng, {2, 5, 5}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})},
        [](auto& x) { return conv2d(x[0], x[1], x[2], 2, 1); });
  check("group_norm", {random_tensor(rng, {4, 3, 3})}, [](auto& x) { return group_norm(x[0], 2); });
  check("global_avg_pool", {random_tensor(rng, {3, 2, 4})}, [](auto& x) { return global_avg_pool(x[0]); });
  check("avg_pool", {random_tensor(rng, {2, 4, 4})}, [](auto& x) { return avg_pool(x[0], 2); });
  check("channel_shuffle", {random_tensor(rng, {6, 2, 2})}, [](auto& x) { return channel_shuffle(x[0], 2); });
  check("spatial_attention", {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 3})},
        [](auto& x) { return spatial_attention(x[0], x[1], x[2]); });
  check("channel_attention", {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 1, 1}), random_tensor(rng, {2, 1, 1})},
        [](auto& x) { return channel_attention(x[0], x[1], x[2]); });
  check("to_tokens", {random_tensor(rng, {4, 2, 3})}, [](auto& x) { return to_tokens(x[0]); });
  check("from_tokens", {random_tensor(rng, {6, 4})}, [](auto& x) { return from_tokens(x[0], 2, 3); });
  check("attention_weights", {random_tensor(rng, {5, 4}), random_tensor(rng, {6, 4})},
        [](auto& x) { return attention_weights(x[0], x[1]); });
  check("discriminator", {random_tensor(rng, {8, 4, 4})}, [d = Discriminator::init(8, rng.split(7), 0.2)](auto& x) {
    return discriminator_forward(x[0], d);
  });
  {
    const Tensor zs = random_tensor(rng, {1}), zt = random_tensor(rng, {1}), zt2 = random_tensor(rng, {1});
    check("adversarial_loss", {zs, zt, zt2}, [](auto& x) {
      return adversarial_loss({sigmoid(x[0])}, {sigmoid(x[1]), sigmoid(x[2])}).value;
    });
    check("adversarial_loss_from_logits", {zs, zt, zt2},
          [](auto& x) { return adversarial_loss_from_logits({x[0]}, {x[1], x[2]}).value; });
  }
  return out;
}

/// Configuration of the composite check: C=8, level-0 maps 16x16, K=2, L=2,
/// both attention stages active.
inline ModelConfig composite_config() {
  ModelConfig cfg;
  cfg.detr.C = 8;
  cfg.detr.L = 2;
  cfg.detr.N = 4;
  cfg.detr.image_size = 32;
  cfg.ham.C = 8;
  cfg.ham.L = 2;
  cfg.ham.K = 2;
  cfg.align = {AlignmentPath::attention, true, true};
  return cfg;
}

/// Checks d(L_det - lambda * L_adv) / d(theta) for every parameter of the
/// backbone, encoder, decoder, attention module and discriminator on one
/// labelled source scene and one target scene. At most `max_coords`
/// coordinates per tensor are probed.
inline GradCheckResult composite_grad_check(std::uint64_t seed, double lambda = 0.1, double h = 1e-5,
                                            std::size_t max_coords = 4) {
  const ModelConfig cfg = composite_config();
  Model m = Model::init(cfg, seed);
  Rng rng = Rng(seed).split(0x6b);
  // move the attention parameters away from their symmetric initial values
  for (Tensor t : m.ham.parameters()) {
    auto d = t.mutable_data();
    for (double& v : d) v += rng.uniform(-0.5, 0.5);
  }
  GeneratorConfig gen;
  gen.image_size = cfg.detr.image_size;
  gen.min_objects = 1;
  const auto source = generate_scenes(Domain::source, 1, rng, gen);
  const auto target = gen_domain_batch(Domain::target, 1, rng, gen);
  // no reversal: the reference objective is the plain weighted difference
  const GrlConfig grl_cfg{lambda, 1.0};
  auto build = [&] {
    const Objective obj = build_objective(m, source, target, grl_cfg, false);
    return sub(obj.l_det, scale(obj.adv.value, lambda));
  };
  std::vector<Tensor> params = m.detector_parameters();
  for (const Tensor& t : m.disc.parameters()) params.push_back(t);
  return grad_check(build, params, h, max_coords);
}

}  // namespace hamalign::harness
