/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hef/checkpoint.hpp"
#include "hef/passes.hpp"
#include "hef/schedule.hpp"
#include "oracles.hpp"
#include "random_models.hpp"

using namespace hef;

namespace {

const std::string kConfigDir = HEF_CONFIG_DIR;

Tensor random_batch(const ModelGraph& g, std::size_t n, std::uint64_t seed, double lo = -10, double hi = 10) {
  Shape s{n};
  s.insert(s.end(), g.input_shape().begin(), g.input_shape().end());
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(s, rng, lo, hi);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::size_t count_kind(const ModelGraph& g, const std::string& kind) {
  std::size_t k = 0;
  for (const auto& n : g.nodes()) k += n.kind_name() == kind;
  return k;
}

ModelGraph scalar_bn_dense(double gamma, double beta, double mean, double var, double w, double b) {
  auto g = parse_model_config("input 1\nmode eval\nbatchnorm eps=0\ndense out=1\n");
  auto& bn = *g.nodes()[0].as<BatchNormLayer>();
  bn.gamma[0] = gamma;
  bn.beta[0] = beta;
  bn.running_mean[0] = mean;
  bn.running_var[0] = var;
  auto& d = *g.nodes()[1].as<DenseLayer>();
  d.weight = Tensor({1, 1}, w);
  d.bias = Tensor({1}, b);
  return g;
}

}  // namespace

// ------------------------------------------------------------------- fold

TEST(FoldBatchNorm, IdentityFoldsAway) {
  auto g = scalar_bn_dense(1, 0, 0, 1, 2.5, -0.5);
  auto f = fold_batch_norm(g);
  ASSERT_EQ(f.nodes().size(), 1u);
  EXPECT_EQ(f.nodes()[0].as<DenseLayer>()->weight[0], 2.5);
  EXPECT_EQ(f.nodes()[0].as<DenseLayer>()->bias[0], -0.5);
}

TEST(FoldBatchNorm, ScalarHandAlgebra) {
  // 3 * (2x + 1) = 6x + 3.
  auto f = fold_batch_norm(scalar_bn_dense(2, 1, 0, 1, 3, 0));
  ASSERT_EQ(f.nodes().size(), 1u);
  EXPECT_EQ(f.nodes()[0].as<DenseLayer>()->weight[0], 6.0);
  EXPECT_EQ(f.nodes()[0].as<DenseLayer>()->bias[0], 3.0);
}

TEST(FoldBatchNorm, RandomCnnsAreEquivalent) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto g = testmodels::random_cnn(seed);
    auto f = fold_batch_norm(g);
    EXPECT_EQ(count_kind(f, "batch_norm"), 0u);
    EXPECT_EQ(f.nodes().size(), g.nodes().size() - 3);
    double worst = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
      Tensor x = random_batch(g, 1, seed * 1000 + k);
      worst = std::max(worst, max_abs_diff(g.predict(x), f.predict(x)));
    }
    EXPECT_LT(worst, 1e-9) << "seed " << seed;
  }
}

TEST(FoldBatchNorm, IsPure) {
  auto g = testmodels::random_cnn(3);
  const auto before = serialize_checkpoint(g);
  (void)fold_batch_norm(g);
  EXPECT_EQ(serialize_checkpoint(g), before);
}

TEST(FoldBatchNorm, TrainModeIsContractError) {
  auto g = testmodels::random_cnn(4);
  g.set_mode(Mode::Train);
  EXPECT_THROW(fold_batch_norm(g), ContractError);
}

TEST(FoldBatchNorm, ActivationAfterBatchNormIsFoldErrorNamingIt) {
  auto g = parse_model_config("input 4\nmode eval\ndense out=3\nbatchnorm\nactivation name=poly kind=square\n"
                              "dense out=2\n");
  try {
    fold_batch_norm(g);
    FAIL() << "expected FoldError";
  } catch (const FoldError& e) {
    EXPECT_NE(std::string(e.what()).find("poly"), std::string::npos) << e.what();
  }
}

TEST(FoldBatchNorm, TrailingBatchNormIsFoldError) {
  auto g = parse_model_config("input 4\nmode eval\ndense out=3\nbatchnorm\n");
  EXPECT_THROW(fold_batch_norm(g), FoldError);
}

TEST(FoldBatchNorm, CommutesWithPoolReplacement) {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    auto g = testmodels::random_cnn(seed, true);
    auto a = replace_maxpool_with_avgpool(fold_batch_norm(g)).graph;
    auto b = fold_batch_norm(replace_maxpool_with_avgpool(g).graph);
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  }
}

// ----------------------------------------------------------- pool swap

TEST(ReplaceMaxPool, NoMaxPoolMeansNoChange) {
  auto g = testmodels::random_cnn(5);
  for (auto& n : g.nodes())
    if (auto* p = n.as<PoolLayer>()) p->kind = PoolKind::Avg;
  auto r = replace_maxpool_with_avgpool(g);
  EXPECT_TRUE(r.replaced.empty());
  EXPECT_EQ(serialize_checkpoint(r.graph), serialize_checkpoint(g));
}

TEST(ReplaceMaxPool, ConstantInputGivesSameOutput) {
  auto g = parse_model_config("input 1 6 6\nmode eval\nmaxpool window=2\nflatten\ndense out=2\n");
  Rng rng(1);
  g.initialize(rng);
  auto r = replace_maxpool_with_avgpool(g);
  ASSERT_EQ(r.replaced.size(), 1u);
  Tensor x({1, 1, 6, 6}, 0.75);
  EXPECT_EQ(g.predict(x), r.graph.predict(x));
}

TEST(ReplaceMaxPool, AlexNetBaselineHasThreeReplacements) {
  auto g = load_model_config(kConfigDir + "/alexnet_baseline.model");
  auto r = replace_maxpool_with_avgpool(g);
  EXPECT_EQ(r.replaced, (std::vector<std::string>{"pool1", "pool2", "pool3"}));
  EXPECT_EQ(count_kind(r.graph, "max_pool"), 0u);
  EXPECT_EQ(count_kind(r.graph, "avg_pool"), 3u);
  for (const auto& name : r.replaced)
    EXPECT_EQ(r.graph.find(name)->as<PoolLayer>()->window.stride, g.find(name)->as<PoolLayer>()->window.stride);
}

// -------------------------------------------------------------- finalize

TEST(Finalize, TransitionedCnnIsLintCleanAndEquivalent) {
  for (std::uint64_t seed = 30; seed < 35; ++seed) {
    auto g = apply_transition(testmodels::random_cnn(seed), 1.0);
    for (auto& n : g.nodes())
      if (auto* a = n.as<ActivationLayer>()) a->act.kind = ActivationKind::Weighted;  // Weighted(1)
    auto f = finalize_he_friendly(g);
    EXPECT_TRUE(he_lint(f).empty());
    EXPECT_EQ(count_kind(f, "dropout"), 0u);
    EXPECT_EQ(count_kind(f, "batch_norm"), 0u);
    EXPECT_EQ(count_kind(f, "weighted"), 0u);
    Tensor x = random_batch(g, 20, seed);
    EXPECT_LT(max_abs_diff(g.predict(x), f.predict(x)), 1e-9);
  }
}

TEST(Finalize, PartialTransitionIsRejectedNamingLayer) {
  auto g = apply_transition(testmodels::random_cnn(40), 1.0);
  for (auto& n : g.nodes())
    if (auto* a = n.as<ActivationLayer>()) {
      a->act.kind = ActivationKind::Weighted;
      a->act.lambda = 0.5;
      try {
        finalize_he_friendly(g);
        FAIL();
      } catch (const FinalizeError& e) {
        EXPECT_NE(std::string(e.what()).find(n.name), std::string::npos);
      }
      break;
    }
}

TEST(Finalize, ResidualReluOrMaxPoolIsRejected) {
  auto relu = parse_model_config("input 4\nmode eval\ndense out=3 activation=relu\ndense out=2\n");
  EXPECT_THROW(finalize_he_friendly(relu), FinalizeError);
  auto maxp = parse_model_config("input 1 4 4\nmode eval\nmaxpool\nflatten\ndense out=2\n");
  EXPECT_THROW(finalize_he_friendly(maxp), FinalizeError);
}

TEST(Finalize, IsIdempotent) {
  auto f = finalize_he_friendly(apply_transition(testmodels::random_cnn(41), 1.0));
  EXPECT_EQ(serialize_checkpoint(finalize_he_friendly(f)), serialize_checkpoint(f));
}

TEST(Finalize, AcceptsTrainModeInput) {
  auto g = apply_transition(testmodels::random_cnn(42), 1.0);
  g.set_mode(Mode::Train);
  auto f = finalize_he_friendly(g);
  EXPECT_EQ(f.mode(), Mode::Eval);
  EXPECT_TRUE(he_lint(f).empty());
}

// ------------------------------------------------------------------ depth

TEST(Depth, AlexNetLayerCountIsTwentyOne) {
  auto r = multiplicative_depth(load_model_config(kConfigDir + "/alexnet_he.model"));
  EXPECT_EQ(r.layer_count, 21u);
}

TEST(Depth, AlexNetAfterFoldIsEighteen) {
  auto g = load_model_config(kConfigDir + "/alexnet_he.model");
  g.set_mode(Mode::Eval);
  auto r = multiplicative_depth(fold_batch_norm(g));
  EXPECT_EQ(r.total, 18u);
  EXPECT_EQ(multiplicative_depth(finalize_he_friendly(g)).total, 18u);
  // Unfolded, each batch norm costs one more level.
  EXPECT_EQ(multiplicative_depth(g).total, 21u);
}

TEST(Depth, SingleTrainablePolyIsOne) {
  auto g = parse_model_config("input 3\nactivation kind=trainable_poly\n");
  EXPECT_EQ(multiplicative_depth(g).total, 1u);
}

TEST(Depth, CostedLayerStrictlyIncreasesDepth) {
  const std::string base = "input 1 6 6\nconv out=2 kernel=3 activation=square\n";
  const unsigned d0 = multiplicative_depth(parse_model_config(base)).total;
  for (const char* extra : {"conv out=2 kernel=1\n", "avgpool\n", "batchnorm\n", "activation kind=approx_relu\n",
                            "activation kind=trainable_poly\n", "activation kind=square\n"})
    EXPECT_GT(multiplicative_depth(parse_model_config(base + extra)).total, d0) << extra;
  EXPECT_EQ(multiplicative_depth(parse_model_config(base + "flatten\ndropout\n")).total, d0);
}

TEST(Depth, ReluAndMaxPoolAreViolationsNotCosts) {
  auto r = multiplicative_depth(parse_model_config("input 1 4 4\nconv out=1 kernel=1 activation=relu\nmaxpool\n"));
  EXPECT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations.size(), 2u);
  EXPECT_FALSE(r.entries[1].cost.has_value());
  EXPECT_FALSE(r.he_friendly());
}

TEST(Depth, ConventionFromFile) {
  auto conv = DepthConvention::parse("avg_pool = 0\n# comment\nbatch_norm = 2\n");
  auto g = load_model_config(kConfigDir + "/alexnet_he.model");
  EXPECT_EQ(multiplicative_depth(g, conv).total, 5u + 7u + 3u + 3u * 2u);
  EXPECT_THROW(DepthConvention::parse("relu = 1\n"), ConfigError);
  EXPECT_THROW(DepthConvention::parse("lstm = 1\n"), ConfigError);
  EXPECT_THROW(DepthConvention::parse("conv2d 1\n"), ConfigError);
}

TEST(Depth, ReportListsEveryNode) {
  auto g = load_model_config(kConfigDir + "/alexnet_he.model");
  auto text = format_depth_report(multiplicative_depth(g));
  for (const auto& n : g.nodes()) EXPECT_NE(text.find(n.name), std::string::npos);
  EXPECT_NE(text.find("total_depth 21"), std::string::npos);
  EXPECT_NE(text.find("layer_count 21"), std::string::npos);
}

// ------------------------------------------------------------------- lint

TEST(Lint, BaselineAlexNetHasAtLeastTenViolations) {
  auto v = he_lint(load_model_config(kConfigDir + "/alexnet_baseline.model"));
  std::size_t relu = 0, maxp = 0;
  for (const auto& x : v) {
    relu += x.reason.find("relu") != std::string::npos;
    maxp += x.reason.find("max") != std::string::npos;
  }
  EXPECT_GE(v.size(), 10u);
  EXPECT_EQ(relu, 7u);
  EXPECT_EQ(maxp, 3u);
}

TEST(Lint, SingleWeightedHalfIsOneViolation) {
  auto g = parse_model_config(
      "input 4\nmode eval\ndense out=3\nactivation name=blend kind=weighted lambda=0.5\ndense out=2\n");
  auto v = he_lint(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].node, "blend");
}

TEST(Lint, FlagsTrainModeBatchNormAndDropout) {
  auto g = parse_model_config("input 4\ndense out=3\nbatchnorm name=bn\ndropout name=drop p=0.1\ndense out=2\n");
  auto v = he_lint(g);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].node, "bn");
  EXPECT_EQ(v[1].node, "drop");
  g.set_mode(Mode::Eval);
  EXPECT_EQ(he_lint(g).size(), 1u);
}

TEST(Lint, FinalizedAlexNetIsClean) {
  auto g = load_model_config(kConfigDir + "/alexnet_he.model");
  EXPECT_TRUE(he_lint(finalize_he_friendly(g)).empty());
}
