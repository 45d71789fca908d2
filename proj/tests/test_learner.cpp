#include <gtest/gtest.h>

#include <limits>

#include <cmath>

#include "rsscm/experiment.hpp"
#include "rsscm/learner.hpp"
#include "rsscm/rectifier.hpp"

using namespace rsscm;

namespace {

BenchmarkData small_benchmark(BenchmarkConfig cfg = desk_config(), std::size_t n = 1000) {
  cfg.samples_per_env = n;
  cfg.test_samples = n;
  return generate_benchmark(cfg);
}

TrainConfig small_train() {
  TrainConfig t;
  t.steps = 300;
  t.batch_size = 64;
  t.selector_steps = 5;
  t.max_outer_epochs = 3;
  t.inner_iterations = 2;
  return t;
}

Eigen::VectorXd all_parameters(const ModelBundle& b) {
  std::vector<const Net*> nets{&b.h, &b.g_i, &b.s, &b.t};
  for (const auto& g : b.g_d) nets.push_back(&g);
  Eigen::Index n = 0;
  for (auto* net : nets) n += net->parameter_count();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (auto* net : nets) {
    out.segment(at, net->parameter_count()) = net->flat_parameters();
    at += net->parameter_count();
  }
  return out;
}

/// Sets the selector's last layer so s(·) is the constant sigmoid(bias).
void constant_selector(ModelBundle& b, double bias) {
  auto& last = b.s.mutable_layers().back();
  last.weight.setZero();
  last.bias.setConstant(bias);
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndErrors) {
  TrainConfig t = small_train();
  t.lambda = 0.3;
  t.encoder = "binary";
  EXPECT_EQ(TrainConfig::from_json(t.to_json()).to_json(), t.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"lamda", 0.1}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"lambda", -1.0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"optimizer", "lbfgs"}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"encoder", "ternary"}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"steps", "many"}}), ConfigError);
}

TEST(Bundle, ShapesAndRanges) {
  const BenchmarkData data = small_benchmark();
  const ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  EXPECT_EQ(b.feature_dim(), 12);
  EXPECT_EQ(b.h.in_dim(), 12);
  EXPECT_EQ(b.s.out_dim(), b.feature_dim());
  EXPECT_EQ(b.g_d.size(), 2u);
  const Eigen::MatrixXd f = features(b, data.train[0].x, false);
  const Eigen::MatrixXd s = b.s.forward(f);
  EXPECT_GT(s.minCoeff(), 0.0);
  EXPECT_LT(s.maxCoeff(), 1.0);
  EXPECT_EQ((s + (1.0 - s.array()).matrix()).cwiseAbs().maxCoeff(), 1.0);
  const auto mass = selector_block_mass(b, data.train[0].x);
  for (double m : mass) {
    EXPECT_GT(m, 0.0);
    EXPECT_LT(m, 1.0);
  }
  TrainConfig binary;
  binary.encoder = "binary";
  EXPECT_EQ(make_bundle(4, 10, 2, binary).feature_dim(), 12);
}

TEST(Bundle, JsonRoundTripIsExact) {
  const BenchmarkData data = small_benchmark();
  ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  b.method = "test";
  b.selector_active = true;
  const ModelBundle back = ModelBundle::from_json(nlohmann::json::parse(b.to_json().dump()));
  EXPECT_EQ(all_parameters(back), all_parameters(b));
  EXPECT_EQ(back.manifest(), b.manifest());
  EXPECT_EQ(evaluate(back, data.test.at(Shift::kBoth), true), evaluate(b, data.test.at(Shift::kBoth), true));
}

TEST(Evaluate, FreshBundleIsNearChance) {
  BenchmarkConfig cfg;
  cfg.num_classes = 10;
  const BenchmarkData data = small_benchmark(cfg, 10000);
  const ModelBundle b = make_bundle(cfg.obs_dim, 10, 2, TrainConfig{});
  EXPECT_NEAR(evaluate(b, data.test.at(Shift::kBoth), false), 0.1, 0.02);
}

TEST(Evaluate, MeanWeightsDatasetsEqually) {
  const BenchmarkData data = small_benchmark();
  const ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  const auto& a = data.test.at(Shift::kZsRandom);
  const EnvironmentDataset small = data.test.at(Shift::kBoth).slice(0, 100);
  EXPECT_DOUBLE_EQ(evaluate_mean(b, {a, small}, false), 0.5 * (evaluate(b, a, false) + evaluate(b, small, false)));
}

TEST(SelectorLoss, SaturatedSelectorSeesZeroComplement) {
  const BenchmarkData data = small_benchmark();
  ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  constant_selector(b, 800.0);
  const auto& d = data.train[0];
  const Eigen::MatrixXd f = b.h.forward(d.x);
  const double kept = nn::cross_entropy_with_logits<double>(b.g_i.forward(f), d.y).value;
  const double empty =
      nn::cross_entropy_with_logits<double>(b.g_i.forward(Eigen::MatrixXd::Zero(f.rows(), f.cols())), d.y).value;
  EXPECT_NEAR(selector_loss(b, d.x, d.y, 0.1), kept - 0.1 * empty, 1e-12);
}

TEST(SelectorLoss, HalfSelectorScalesWithOneMinusLambda) {
  const BenchmarkData data = small_benchmark();
  ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  constant_selector(b, 0.0);
  const auto& d = data.train[1];
  const double half = nn::cross_entropy_with_logits<double>(b.g_i.forward(0.5 * b.h.forward(d.x)), d.y).value;
  for (double lambda : {0.0, 0.1, 1.0, 3.0}) {
    EXPECT_NEAR(selector_loss(b, d.x, d.y, lambda), (1.0 - lambda) * half, 1e-12);
  }
}

TEST(SelectorLoss, WidthMismatchRejected) {
  const BenchmarkData data = small_benchmark();
  ModelBundle b = make_bundle(4, 4, 2, TrainConfig{});
  std::mt19937_64 rng(0);
  b.s = Net();
  b.s.add_dense(12, 5, nn::Activation::kSigmoid, rng);
  EXPECT_THROW(selector_loss(b, data.train[0].x, data.train[0].y, 0.1), std::invalid_argument);
}

TEST(Split, HoldsOutTrailingFraction) {
  const BenchmarkData data = small_benchmark();
  const TrainValSplit s = split_train_validation(data.train, 0.2);
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.train[0].size(), 800u);
  EXPECT_EQ(s.validation[0].size(), 200u);
  EXPECT_EQ(s.validation[0].y.front(), data.train[0].y[800]);
  EXPECT_THROW(split_train_validation(data.train, 1.0), std::invalid_argument);
}

TEST(Training, ErmFitsNoiselessSeparableData) {
  BenchmarkConfig cfg = desk_config();
  cfg.flip_rate = 0.0;
  cfg.noise_sigma = 0.05;
  const BenchmarkData data = small_benchmark(cfg);
  const TrainValSplit split = split_train_validation(data.train, 0.2);
  TrainConfig t = small_train();
  t.steps = 4000;
  const ModelBundle erm = train_erm(split, t);
  EXPECT_EQ(evaluate_mean(erm, split.train, false), 1.0);
}

TEST(Training, SameConfigSameParameters) {
  const TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  TrainConfig t = small_train();
  t.steps = 50;
  EXPECT_EQ(all_parameters(train_invrat(split, t)), all_parameters(train_invrat(split, t)));
  t.seed = 1;
  const ModelBundle other = train_invrat(split, t);
  t.seed = 0;
  EXPECT_NE(all_parameters(other), all_parameters(train_invrat(split, t)));
}

TEST(Training, InvRatNeedsTwoEnvironments) {
  TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  split.train.pop_back();
  split.validation.pop_back();
  EXPECT_THROW(train_invrat(split, small_train()), std::invalid_argument);
}

TEST(Training, GapSmallWithoutEnvironmentSignal) {
  BenchmarkConfig cfg = desk_config();
  cfg.train_envs = {{0.9, 0.9}, {0.9, 0.9}};
  const TrainValSplit split = split_train_validation(small_benchmark(cfg, 4000).train, 0.2);
  TrainConfig t = small_train();
  t.steps = 600;
  t.batch_size = 256;
  Curves curves;
  train_invrat(split, t, &curves);
  ASSERT_GE(curves.rows.size(), 10u);
  // Single-batch gaps are noisy; average the last ten logged steps.
  double gap = 0.0;
  for (auto it = curves.rows.end() - 10; it != curves.rows.end(); ++it) gap += it->terms.at("invariance_gap");
  EXPECT_LT(std::abs(gap / 10.0), 0.05);
}

TEST(Training, BottleneckModeReportsCompression) {
  const TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  TrainConfig t = small_train();
  t.steps = 40;
  t.bottleneck_weight = 0.1;
  Curves curves;
  const ModelBundle b = train_invrat(split, t, &curves);
  EXPECT_EQ(b.method, "iib");
  EXPECT_TRUE(curves.rows.back().terms.count("compression"));
  EXPECT_GE(curves.rows.back().terms.at("compression"), 0.0);
  EXPECT_EQ(curves.to_csv().substr(0, curves.to_csv().find('\n')), "epoch,phase,term,value,id_accuracy");
}

TEST(Training, ZeroInnerIterationsFreezesEverythingButTheSelector) {
  const TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  TrainConfig t = small_train();
  t.steps = 50;
  const ModelBundle base = train_invrat(split, t);
  t.inner_iterations = 0;
  const ModelBundle iil = train_iil(base, split, t);
  EXPECT_EQ(iil.h.flat_parameters(), base.h.flat_parameters());
  EXPECT_EQ(iil.g_i.flat_parameters(), base.g_i.flat_parameters());
  for (std::size_t e = 0; e < base.g_d.size(); ++e) EXPECT_EQ(iil.g_d[e].flat_parameters(), base.g_d[e].flat_parameters());
  EXPECT_NE(iil.s.flat_parameters(), base.s.flat_parameters());
  EXPECT_TRUE(iil.selector_active);
  EXPECT_EQ(iil.method, "iil");
}

TEST(Training, InnerPhaseLeavesSelectorUntouched) {
  const TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  TrainConfig t = small_train();
  t.steps = 50;
  t.selector_steps = 0;
  const ModelBundle base = train_invrat(split, t);
  const ModelBundle iil = train_iil(base, split, t);
  EXPECT_EQ(iil.s.flat_parameters(), base.s.flat_parameters());
  EXPECT_EQ(iil.t.flat_parameters(), base.t.flat_parameters());
  EXPECT_NE(iil.h.flat_parameters(), base.h.flat_parameters());
}

TEST(Training, IilIsDeterministic) {
  const TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  TrainConfig t = small_train();
  t.steps = 50;
  const ModelBundle base = train_invrat(split, t);
  Curves a, b;
  EXPECT_EQ(all_parameters(train_iil(base, split, t, &a)), all_parameters(train_iil(base, split, t, &b)));
  EXPECT_EQ(a.to_csv(), b.to_csv());
}

TEST(Training, NonFiniteLossReported) {
  TrainValSplit split = split_train_validation(small_benchmark().train, 0.2);
  split.train[0].x.setConstant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(train_erm(split, small_train()), nn::TrainingDivergence);
  EXPECT_THROW(train_invrat(split, small_train()), nn::TrainingDivergence);
}
