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

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "hamalign/gradcheck.hpp"
#include "hamalign/ham.hpp"
#include "ham_oracle.hpp"
#include "test_util.hpp"

namespace hamalign {
namespace {

using test::bit_equal;
using test::random_tensor;

std::vector<double> iota(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

HamConfig small_config(std::size_t C, std::size_t K, std::size_t L) {
  HamConfig cfg;
  cfg.C = C;
  cfg.K = K;
  cfg.L = L;
  return cfg;
}

void randomize(HamParams& params, Rng& rng) {
  for (Tensor t : params.parameters()) {
    for (double& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
  }
}

TEST(SplitGroups, SingleGroup) {
  const auto g = split_groups(Tensor::from({4, 1, 1}, iota(4)), 1);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].first.values(), (std::vector<double>{0, 1}));
  EXPECT_EQ(g[0].second.values(), (std::vector<double>{2, 3}));
}

TEST(SplitGroups, ContiguousRanges) {
  const auto g = split_groups(Tensor::from({8, 1, 1}, iota(8)), 2);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].first.values(), (std::vector<double>{0, 1}));
  EXPECT_EQ(g[0].second.values(), (std::vector<double>{2, 3}));
  EXPECT_EQ(g[1].first.values(), (std::vector<double>{4, 5}));
  EXPECT_EQ(g[1].second.values(), (std::vector<double>{6, 7}));
}

TEST(SplitGroups, OrderedConcatReconstructsInput) {
  Rng rng(1);
  for (std::size_t K : {1u, 2u, 4u}) {
    const Tensor x = random_tensor(rng, {16, 3, 5}, false);
    std::vector<Tensor> parts;
    for (const auto& [a, b] : split_groups(x, K)) {
      parts.push_back(a);
      parts.push_back(b);
    }
    EXPECT_TRUE(bit_equal(concat(parts).data(), x.data()));
  }
}

TEST(SplitGroups, DivisibilityErrorNamesCAndK) {
  try {
    split_groups(Tensor::zeros({12, 2, 2}), 4);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("C=12"), std::string::npos);
    EXPECT_NE(msg.find("K=4"), std::string::npos);
  }
}

TEST(SpatialAttention, ConstantInputGivesHalf) {
  Rng rng(2);
  const Tensor w = random_tensor(rng, {2, 3, 3}, false);
  const Tensor y = spatial_attention(Tensor::full({2, 3, 3}, 4.2), w, Tensor::zeros({2, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, ZeroParametersGiveHalf) {
  Rng rng(3);
  const Tensor p = random_tensor(rng, {2, 3, 3}, false);
  const Tensor y = spatial_attention(p, Tensor::zeros({2, 3, 3}), Tensor::zeros({2, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, LargeBiasSaturatesTowardOne) {
  Rng rng(4);
  const Tensor p = random_tensor(rng, {2, 3, 3}, false);
  const Tensor y = spatial_attention(p, Tensor::zeros({2, 1, 1}), Tensor::full({2, 1, 1}, 10.0));
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(y[0], 0.99995, 1e-5);
}

TEST(SpatialAttention, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(spatial_attention(Tensor::zeros({2, 3, 3}), Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 2, 2})),
               DimensionError);
}

TEST(ChannelAttention, ZeroInputGivesHalf) {
  const Tensor y = channel_attention(Tensor::zeros({3, 2, 2}), Tensor::full({3, 1, 1}, 2.0), Tensor::zeros({3, 1, 1}));
  for (double v : y.data()) EXPECT_EQ(v, 0.5);
}

TEST(ChannelAttention, ConstantChannelsGiveLogisticOfValue) {
  const Tensor p = Tensor::from({2, 1, 2}, {0.3, 0.3, -1.2, -1.2});
  const Tensor y = channel_attention(p, Tensor::full({2, 1, 1}, 1.0), Tensor::zeros({2, 1, 1}));
  EXPECT_NEAR(y[0], test::logistic(0.3), 1e-15);
  EXPECT_NEAR(y[1], test::logistic(-1.2), 1e-15);
}

TEST(ChannelAttention, MatchesHandRecomputation) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = random_tensor(rng, {4, 3, 5}, false);
    const Tensor w = random_tensor(rng, {4, 1, 1}, false);
    const Tensor b = random_tensor(rng, {4, 1, 1}, false);
    const Tensor y = channel_attention(p, w, b);
    ASSERT_EQ(y.shape(), (Shape{4, 1, 1}));
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0.0;
      for (std::size_t i = 0; i < 15; ++i) m += p[c * 15 + i];
      m /= 15.0;
      EXPECT_NEAR(y[c], test::logistic(w[c] * m + b[c]), 1e-12);
    }
  }
  EXPECT_THROW(channel_attention(Tensor::zeros({4, 2, 2}), Tensor::zeros({3, 1, 1}), Tensor::zeros({3, 1, 1})),
               DimensionError);
}

test::CamOracleInput oracle_input(const Tensor& f, const Tensor& p, const CamLevelParams& cp, const HamConfig& cfg) {
  return {cfg.C,        f.dim(1),    f.dim(2),    cfg.K,       cfg.shuffle_sub_groups,
          cfg.gn_eps,   cfg.param_mode == ParamMode::broadcast,
          f.values(),   p.values(),  cp.w_s.values(), cp.b_s.values(), cp.w_c.values(), cp.b_c.values()};
}

TEST(CamForward, NeutralAttentionIsShuffledHalf) {
  const HamConfig cfg = small_config(8, 2, 1);
  Rng rng(6);
  const Tensor f = random_tensor(rng, {8, 4, 4}, false);
  const Tensor p = random_tensor(rng, {8, 4, 4}, false);
  CamLevelParams cp{Tensor::zeros({2, 4, 4}), Tensor::zeros({2, 4, 4}), Tensor::zeros({2, 1, 1}), Tensor::zeros({2, 1, 1})};
  const Tensor y = cam_forward(f, p, cp, cfg);
  // within-group shuffle of width 4: [0,2,1,3] per group
  const std::vector<std::size_t> src{0, 2, 1, 3, 4, 6, 5, 7};
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[c * 16 + i], 0.5 * f[src[c] * 16 + i]);
}

TEST(CamForward, SaturatedAttentionIsPurePermutation) {
  const HamConfig cfg = small_config(8, 2, 1);
  Rng rng(7);
  const Tensor f = random_tensor(rng, {8, 3, 3}, false);
  const Tensor p = random_tensor(rng, {8, 3, 3}, false);
  CamLevelParams cp{Tensor::zeros({2, 3, 3}), Tensor::full({2, 3, 3}, 800.0), Tensor::zeros({2, 1, 1}),
                    Tensor::full({2, 1, 1}, 800.0)};
  const Tensor y = cam_forward(f, p, cp, cfg);
  const std::vector<std::size_t> src{0, 2, 1, 3, 4, 6, 5, 7};
  EXPECT_TRUE(bit_equal(y.data(), permute_channels(f, src).data()));
}

TEST(CamForward, ZeroFeaturesGiveZero) {
  const HamConfig cfg = small_config(8, 2, 1);
  Rng rng(8);
  HamParams params = HamParams::init(cfg, {{4, 4}}, rng);
  randomize(params, rng);
  const Tensor y = cam_forward(Tensor::zeros({8, 4, 4}), random_tensor(rng, {8, 4, 4}, false), params.cam[0], cfg);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(CamForward, MatchesStraightLineOracle) {
  for (ParamMode mode : {ParamMode::paper_literal, ParamMode::broadcast}) {
    HamConfig cfg = small_config(8, 2, 1);
    cfg.param_mode = mode;
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      HamParams params = HamParams::init(cfg, {{4, 5}}, rng.split(trial));
      randomize(params, rng);
      const Tensor f = random_tensor(rng, {8, 4, 5}, false);
      const Tensor p = random_tensor(rng, {8, 4, 5}, false);
      const Tensor y = cam_forward(f, p, params.cam[0], cfg);
      const auto expected = test::cam_oracle(oracle_input(f, p, params.cam[0], cfg));
      for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_NEAR(y[i], expected[i], 1e-12) << "trial " << trial;
    }
  }
}

TEST(CamForward, AttentionValuesStrictlyInsideUnitInterval) {
  const HamConfig cfg = small_config(16, 4, 1);
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    HamParams params = HamParams::init(cfg, {{3, 3}}, rng.split(trial));
    randomize(params, rng);
    CamTrace trace;
    cam_forward(random_tensor(rng, {16, 3, 3}, false), random_tensor(rng, {16, 3, 3}, false, -5, 5), params.cam[0],
                cfg, &trace);
    ASSERT_EQ(trace.spatial.size(), 4u);
    for (const auto& group : {trace.spatial, trace.channel})
      for (const Tensor& a : group)
        for (double v : a.data()) {
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
        }
  }
}

TEST(CamForward, OutputBoundedBySourceChannel) {
  const HamConfig cfg = small_config(8, 2, 1);
  Rng rng(11);
  const auto perm = channel_shuffle_permutation(4, 2);
  for (int trial = 0; trial < 20; ++trial) {
    HamParams params = HamParams::init(cfg, {{3, 4}}, rng.split(trial));
    randomize(params, rng);
    const Tensor f = random_tensor(rng, {8, 3, 4}, false);
    const Tensor y = cam_forward(f, random_tensor(rng, {8, 3, 4}, false), params.cam[0], cfg);
    for (std::size_t c = 0; c < 8; ++c) {
      const std::size_t src = (c / 4) * 4 + perm[c % 4];
      for (std::size_t i = 0; i < 12; ++i) EXPECT_LE(std::fabs(y[c * 12 + i]), std::fabs(f[src * 12 + i]));
    }
  }
}

TEST(CamForward, GroupsAreIndependent) {
  const HamConfig cfg = small_config(12, 3, 1);
  Rng rng(12);
  HamParams params = HamParams::init(cfg, {{3, 3}}, rng);
  randomize(params, rng);
  const Tensor f = random_tensor(rng, {12, 3, 3}, false);
  const Tensor p = random_tensor(rng, {12, 3, 3}, false);
  const Tensor base = cam_forward(f, p, params.cam[0], cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> fz = f.values(), pz = p.values();
    for (std::size_t i = k * 4 * 9; i < (k + 1) * 4 * 9; ++i) fz[i] = pz[i] = 0.0;
    const Tensor zeroed = cam_forward(Tensor::from({12, 3, 3}, fz), Tensor::from({12, 3, 3}, pz), params.cam[0], cfg);
    for (std::size_t other = 0; other < 3; ++other) {
      if (other == k) continue;
      const auto a = base.data().subspan(other * 36, 36);
      const auto b = zeroed.data().subspan(other * 36, 36);
      EXPECT_TRUE(bit_equal(a, b)) << "group " << other << " changed when zeroing " << k;
    }
  }
}

TEST(CamForward, DeterministicAcrossCalls) {
  const HamConfig cfg = small_config(8, 2, 1);
  Rng rng(13);
  HamParams params = HamParams::init(cfg, {{3, 3}}, rng);
  randomize(params, rng);
  const Tensor f = random_tensor(rng, {8, 3, 3}, false);
  const Tensor p = random_tensor(rng, {8, 3, 3}, false);
  EXPECT_TRUE(bit_equal(cam_forward(f, p, params.cam[0], cfg).data(), cam_forward(f, p, params.cam[0], cfg).data()));
}

TEST(LamForward, SymmetricLevelsWithZeroLogits) {
  const HamConfig cfg = small_config(4, 1, 2);
  Rng rng(14);
  const Tensor x = random_tensor(rng, {4, 2, 2}, false);
  const LamParams lam{Tensor::zeros({8, 4}), Tensor::zeros({8})};
  Tensor alpha;
  const Tensor v = lam_forward({x, x}, lam, cfg, LevelNorm::softmax, &alpha);
  for (double a : alpha.data()) EXPECT_EQ(a, 0.5);
  EXPECT_TRUE(bit_equal(v.data(), x.data()));
}

TEST(LamForward, SingleLevelPassesThrough) {
  const HamConfig cfg = small_config(4, 1, 1);
  Rng rng(15);
  const Tensor x = random_tensor(rng, {4, 2, 3}, false);
  const LamParams lam{random_tensor(rng, {4, 4}, false), random_tensor(rng, {4}, false)};
  EXPECT_TRUE(bit_equal(lam_forward({x}, lam, cfg).data(), x.data()));
}

TEST(LamForward, HandSetLogitsGiveNinetyTen) {
  const HamConfig cfg = small_config(4, 1, 2);
  Rng rng(16);
  const Tensor a = random_tensor(rng, {4, 3, 3}, false);
  const Tensor b = random_tensor(rng, {4, 3, 3}, false);
  std::vector<double> bias(8, 0.0);
  for (std::size_t c = 0; c < 4; ++c) bias[c] = std::log(9.0);
  const LamParams lam{Tensor::zeros({8, 4}), Tensor::from({8}, bias)};
  Tensor alpha;
  const Tensor v = lam_forward({a, b}, lam, cfg, LevelNorm::softmax, &alpha);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(alpha[c], 0.9, 1e-12);
    EXPECT_NEAR(alpha[4 + c], 0.1, 1e-12);
  }
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(v[i], 0.9 * a[i] + 0.1 * b[i], 1e-12);
}

TEST(LamForward, CoefficientsSumToOnePerChannel) {
  for (std::size_t L : {2u, 3u, 4u}) {
    const HamConfig cfg = small_config(8, 1, L);
    Rng rng(17 + L);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Tensor> levels;
      for (std::size_t l = 0; l < L; ++l) levels.push_back(random_tensor(rng, {8, 2, 2}, false, -3, 3));
      const LamParams lam{random_tensor(rng, {L * 8, 8}, false, -3, 3), random_tensor(rng, {L * 8}, false)};
      Tensor alpha;
      lam_forward(levels, lam, cfg, LevelNorm::softmax, &alpha);
      for (std::size_t c = 0; c < 8; ++c) {
        double s = 0.0;
        for (std::size_t l = 0; l < L; ++l) s += alpha[l * 8 + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(LamForward, SigmoidAlternativeStaysInUnitInterval) {
  const HamConfig cfg = small_config(4, 1, 2);
  Rng rng(18);
  const LamParams lam{random_tensor(rng, {8, 4}, false), random_tensor(rng, {8}, false)};
  Tensor alpha;
  lam_forward({random_tensor(rng, {4, 2, 2}, false), random_tensor(rng, {4, 2, 2}, false)}, lam, cfg,
              LevelNorm::sigmoid, &alpha);
  for (double a : alpha.data()) {
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(LamForward, LevelCountMismatchIsConfigError) {
  const HamConfig cfg = small_config(4, 1, 3);
  const LamParams lam{Tensor::zeros({12, 4}), Tensor::zeros({12})};
  EXPECT_THROW(lam_forward({Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 2, 2})}, lam, cfg), ConfigError);
}

TEST(HamForward, NeutralSingleLevelIsShuffledHalf) {
  const HamConfig cfg = small_config(8, 1, 1);
  Rng rng(19);
  HamParams params = HamParams::init(cfg, {{4, 4}}, rng);
  for (Tensor t : params.parameters())
    for (double& v : t.mutable_data()) v = 0.0;
  const Tensor f = random_tensor(rng, {8, 4, 4}, false);
  const Tensor v = ham_forward({f}, {random_tensor(rng, {8, 4, 4}, false)}, params, cfg);
  const Tensor expected = scale(channel_shuffle(f, 2), 0.5);
  EXPECT_TRUE(bit_equal(v.data(), expected.data()));
}

TEST(HamForward, OutputShapeIsCoarsestLevel) {
  const HamConfig cfg = small_config(8, 2, 3);
  Rng rng(20);
  const std::vector<LevelSize> sizes{{16, 16}, {8, 8}, {4, 4}};
  HamParams params = HamParams::init(cfg, sizes, rng);
  std::vector<Tensor> f, p;
  for (const auto& s : sizes) {
    f.push_back(random_tensor(rng, {8, s.h, s.w}, false));
    p.push_back(random_tensor(rng, {8, s.h, s.w}, false));
  }
  EXPECT_EQ(ham_forward(f, p, params, cfg).shape(), (Shape{8, 4, 4}));
}

TEST(HamForward, GradientOfMeanMatchesFiniteDifferences) {
  for (ParamMode mode : {ParamMode::paper_literal, ParamMode::broadcast}) {
    HamConfig cfg = small_config(8, 2, 2);
    cfg.param_mode = mode;
    Rng rng(21);
    const std::vector<LevelSize> sizes{{4, 4}, {2, 2}};
    HamParams params = HamParams::init(cfg, sizes, rng);
    randomize(params, rng);
    std::vector<Tensor> f, p;
    for (const auto& s : sizes) {
      f.push_back(random_tensor(rng, {8, s.h, s.w}));
      p.push_back(random_tensor(rng, {8, s.h, s.w}));
    }
    std::vector<Tensor> probe = params.parameters();
    probe.insert(probe.end(), f.begin(), f.end());
    probe.insert(probe.end(), p.begin(), p.end());
    const auto r = grad_check([&] { return mean(ham_forward(f, p, params, cfg)); }, probe, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

TEST(HamConfig, RejectsIndivisibleK) {
  HamConfig cfg = small_config(16, 32, 2);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.K = 8;
  EXPECT_NO_THROW(cfg.validate());
  cfg.K = 1;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(HamParams, NamesAndShapes) {
  const HamConfig cfg = small_config(8, 2, 2);
  const HamParams params = HamParams::init(cfg, {{4, 4}, {2, 2}}, Rng(1));
  const auto named = params.named();
  ASSERT_EQ(named.size(), 10u);
  EXPECT_EQ(named[0].name, "cam.l0.w_s");
  EXPECT_EQ(named[0].tensor.shape(), (Shape{2, 4, 4}));
  EXPECT_EQ(named[4].name, "cam.l1.w_s");
  EXPECT_EQ(named[4].tensor.shape(), (Shape{2, 2, 2}));
  EXPECT_EQ(named[8].name, "lam.fc_weight");
  EXPECT_EQ(named[8].tensor.shape(), (Shape{16, 8}));
  for (double v : named[0].tensor.data()) EXPECT_EQ(v, 1.0);
  for (double v : named[8].tensor.data()) EXPECT_LE(std::fabs(v), 1e-2);
}

}  // namespace
}  // namespace hamalign
