#include "oracles.hpp"
#include "test_util.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/predict.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sparsegp;

namespace {

SvgpState random_state(std::mt19937_64& rng, const oracle::Instance& in, ConditionalScaling scaling) {
  SvgpState s = init_svgp(testutil::hyper_of(in), in.Z, Likelihood::gaussian(), scaling.mode, in.X.rows());
  s.qu = {VariationalGaussian{testutil::random_vector(rng, in.Z.rows()), testutil::random_chol(rng, in.Z.rows())}};
  s.scaling = scaling;
  return s;
}

Matrix random_points(std::mt19937_64& rng, Index t, Index d) {
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  Matrix x(t, d);
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

}  // namespace

TEST(Predict, PriorQRecoversPriorVariance) {
  std::mt19937_64 rng(90);
  const oracle::Instance in = oracle::random_instance(rng, 8, 3);
  const SvgpState s = init_svgp(testutil::hyper_of(in), in.Z, Likelihood::gaussian(), ScalingMode::Identity);
  const Matrix xs = random_points(rng, 10, 1);
  const PredictiveDist simple = predict(s, in.X, xs, VarianceMode::Simplified);
  const PredictiveDist full = predict(s, in.X, xs, VarianceMode::Full);
  for (Index t = 0; t < 10; ++t) {
    EXPECT_NEAR(simple.var(t), in.var, 1e-8);
    EXPECT_NEAR(full.var(t), simple.var(t), 1e-12);
    EXPECT_NEAR(simple.mean(t), 0.0, 1e-12);
  }
}

TEST(Predict, FarFromDataIsPrior) {
  std::mt19937_64 rng(91);
  const oracle::Instance in = oracle::random_instance(rng, 8, 3);
  const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(in.noise));
  const Matrix xs = Matrix::Constant(2, 1, 500.0);
  const PredictiveDist p = predict(s, in.X, xs);
  EXPECT_NEAR(p.var(0), in.var, 1e-6);
  EXPECT_NEAR(p.mean(0), 0.0, 1e-6);
}

TEST(Predict, FullModeMatchesDenseConditioning) {
  std::mt19937_64 rng(92);
  for (int rep = 0; rep < 10; ++rep) {
    // The oracle inverts the joint Gram over Z and X, so keep it well conditioned.
    oracle::Instance in = oracle::random_instance(rng, 4 + rep % 4, 2 + rep % 3, 2);
    in.ls.setConstant(0.6);
    const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(0.1 + 0.2 * rep));
    const Vector m = realize_m(s.scaling, in.dff().diagonal());
    const Matrix xs = random_points(rng, 7, in.X.cols());
    const oracle::DensePrediction expected = oracle::dense_predict(in, s.qu[0].mean, s.qu[0].covariance(), m, xs);
    const PredictiveDist full = predict(s, in.X, xs, VarianceMode::Full);
    EXPECT_LT((full.mean - expected.mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((full.var - expected.var).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Predict, FullModeAtTrainingPointWithSharedScaling) {
  std::mt19937_64 rng(93);
  const oracle::Instance in = oracle::random_instance(rng, 3, 2);
  const SvgpState s = random_state(rng, in, ConditionalScaling::scalar_shared(0.4));
  const PredictiveDist full = predict(s, in.X, in.X, VarianceMode::Full);
  const CovBundle b = build_bundle(s.hyper, in.Z, in.X);
  for (Index n = 0; n < 3; ++n) EXPECT_NEAR(full.var(n), training_point_var(s, b, n), 1e-8);
}

TEST(Predict, FullVarianceSumsToTrainingMarginals) {
  // tr(R M R) = sum m_n d_n for the symmetric root R of D_ff.
  std::mt19937_64 rng(94);
  const oracle::Instance in = oracle::random_instance(rng, 9, 3);
  const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(in.noise));
  const PredictiveDist full = predict(s, in.X, in.X, VarianceMode::Full);
  const CovBundle b = build_bundle(s.hyper, in.Z, in.X);
  double sum = 0.0;
  for (Index n = 0; n < 9; ++n) sum += training_point_var(s, b, n);
  EXPECT_NEAR(full.var.sum(), sum, 1e-8);
}

TEST(Predict, FullNeverExceedsSimplifiedAndMeansAgree) {
  std::mt19937_64 rng(95);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 5 + rep % 15, 1 + rep % 5, 1 + rep % 2);
    const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(ln(rng)));
    const Matrix xs = random_points(rng, 12, in.X.cols());
    const PredictiveDist full = predict(s, in.X, xs, VarianceMode::Full);
    const PredictiveDist simple = predict(s, in.X, xs, VarianceMode::Simplified);
    EXPECT_EQ(full.mean, simple.mean);
    EXPECT_LE((full.var - simple.var).maxCoeff(), 1e-10);
    EXPECT_GE(full.var.minCoeff(), 0.0);
  }
}

TEST(Predict, IdentityScalingModesCoincide) {
  std::mt19937_64 rng(96);
  const oracle::Instance in = oracle::random_instance(rng, 10, 3);
  const SvgpState s = random_state(rng, in, ConditionalScaling::identity());
  const Matrix xs = random_points(rng, 8, 1);
  EXPECT_LT((predict(s, in.X, xs, VarianceMode::Full).var - predict(s, in.X, xs).var).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Predict, FullModeRefusedOverCap) {
  std::mt19937_64 rng(97);
  const oracle::Instance in = oracle::random_instance(rng, 10, 3);
  const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(in.noise));
  PredictOptions opts;
  opts.full_cap = 5;
  EXPECT_THROW(predict(s, in.X, in.X, VarianceMode::Full, opts), CapabilityError);
  EXPECT_NO_THROW(predict(s, in.X, in.X, VarianceMode::Simplified, opts));
}

TEST(TrainingPointVar, PriorAndDegenerateCases) {
  std::mt19937_64 rng(98);
  const oracle::Instance in = oracle::random_instance(rng, 6, 3);
  const Hyperparams h = testutil::hyper_of(in);
  const CovBundle b = build_bundle(h, in.Z, in.X);
  SvgpState s = init_svgp(h, in.Z, Likelihood::gaussian(), ScalingMode::Identity);
  for (Index n = 0; n < 6; ++n) EXPECT_NEAR(training_point_var(s, b, n), in.var, 1e-10);
  s.scaling = ConditionalScaling::scalar_shared(1e-200);
  s.qu[0].cov_factor = 1e-150 * Matrix::Identity(3, 3);
  for (Index n = 0; n < 6; ++n) EXPECT_NEAR(training_point_var(s, b, n), 0.0, 1e-12);
  EXPECT_THROW(training_point_var(s, b, 6), InputError);
}

TEST(TrainingPointVar, MatchesDenseMarginal) {
  std::mt19937_64 rng(99);
  const oracle::Instance in = oracle::random_instance(rng, 7, 3, 2);
  const SvgpState s = random_state(rng, in, ConditionalScaling::beta_shared(0.3));
  const CovBundle b = build_bundle(s.hyper, in.Z, in.X);
  const Matrix a = in.kfu() * oracle::inv(in.kuu());
  const Vector d = in.dff().diagonal();
  const Vector m = realize_m(s.scaling, d);
  const Vector expected = (a * s.qu[0].covariance() * a.transpose()).diagonal() + m.cwiseProduct(d);
  for (Index n = 0; n < 7; ++n) EXPECT_NEAR(training_point_var(s, b, n), expected(n), 1e-8);
}

TEST(PredictiveLogDensity, GaussianAddsNoise) {
  const double v = predictive_log_density(Likelihood::gaussian(), Vector::Constant(1, 0.5), Vector::Constant(1, 0.3),
                                          1.0, 0.2);
  EXPECT_NEAR(v, -0.5 * std::log(2.0 * std::numbers::pi * 0.5) - 0.25 / 1.0, 1e-14);
}

TEST(PredictiveLogDensity, BernoulliAtZeroVarianceIsLogSigmoid) {
  const double v = predictive_log_density(Likelihood::bernoulli(), Vector::Constant(1, 1.3), Vector::Zero(1), 1.0, 0.0);
  EXPECT_NEAR(v, -std::log1p(std::exp(-1.3)), 1e-12);
}

TEST(RegressionMetrics, OriginalUnits) {
  Vector mean(2), var(2), y(2);
  mean << 0.0, 1.0;
  var << 0.5, 0.5;
  y << 10.0, 14.0;
  const RegressionMetrics r = regression_metrics(mean, var, 0.5, y, 10.0, 2.0);
  EXPECT_NEAR(r.rmse, std::sqrt(2.0), 1e-14);
  const double v = 4.0;
  EXPECT_NEAR(r.mean_log_lik, -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (0.0 + 4.0 / v) / 2.0, 1e-14);
  EXPECT_THROW(regression_metrics(mean, var, 0.5, Vector::Zero(3)), InputError);
}
