#include "oracles.hpp"
#include "test_util.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/errors.hpp"
#include "sparsegp/variational.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sparsegp;

namespace {

double bound(CollapsedKind kind, const oracle::Instance& in, const std::optional<Vector>& m = std::nullopt) {
  return collapsed_bound(kind, testutil::hyper_of(in), in.Z, in.X, in.y, m).total;
}

Vector m_star(const oracle::Instance& in) {
  const Hyperparams h = testutil::hyper_of(in);
  return optimal_m(h, build_bundle(h, in.Z, in.X));
}

}  // namespace

TEST(ExactLml, SinglePointUnitKernel) {
  Hyperparams h;
  h.kernel = Kernel::squared_exponential(1.0, Vector::Ones(1));
  h.log_noise_variance = 0.0;
  const double v = exact_lml(h, Matrix::Zero(1, 1), Vector::Zero(1)).total;
  EXPECT_NEAR(v, -0.5 * std::log(4.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(v, -1.2655, 1e-4);
}

TEST(ExactLml, SinglePointZeroTargetAnyVariance) {
  for (double var : {0.1, 2.0, 7.5}) {
    Hyperparams h;
    h.kernel = Kernel::squared_exponential(var, Vector::Ones(1));
    h.log_noise_variance = std::log(0.3);
    EXPECT_NEAR(exact_lml(h, Matrix::Constant(1, 1, 0.4), Vector::Zero(1)).total,
                -0.5 * std::log(2.0 * std::numbers::pi * (var + 0.3)), 1e-13);
  }
}

TEST(ExactLml, TwoPointsByHandInverse) {
  std::mt19937_64 rng(21);
  const oracle::Instance in = oracle::random_instance(rng, 2, 1);
  const Matrix c = in.kff() + in.noise * Matrix::Identity(2, 2);
  const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
  Matrix ci(2, 2);
  ci << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
  ci /= det;
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * in.y.dot(ci * in.y);
  EXPECT_NEAR(exact_lml(testutil::hyper_of(in), in.X, in.y).total, expected, 1e-12);
}

TEST(CollapsedBound, MatchesDenseOracles) {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 5 + rep, 1 + rep % 5, 1 + rep % 2, rep % 3 == 0);
    const double tol = 1e-8 * (1.0 + std::abs(oracle::dense_exact(in)));
    EXPECT_NEAR(exact_lml(testutil::hyper_of(in), in.X, in.y).total, oracle::dense_exact(in), tol);
    EXPECT_NEAR(bound(CollapsedKind::F1_Titsias, in), oracle::dense_f1(in), tol);
    EXPECT_NEAR(bound(CollapsedKind::F4_Tight, in), oracle::dense_f4(in), tol);
    EXPECT_NEAR(bound(CollapsedKind::F5_LogSum, in), oracle::dense_f5(in), tol);
    EXPECT_NEAR(bound(CollapsedKind::F8_GeneralC, in), oracle::dense_f8(in), tol);
    Vector m = Vector::Constant(in.X.rows(), 0.7);
    m(0) = 0.2;
    EXPECT_NEAR(bound(CollapsedKind::F3_GivenM, in, m), oracle::dense_f3(in, m), tol);
  }
}

TEST(CollapsedBound, InducingAtDataEqualsExact) {
  std::mt19937_64 rng(23);
  oracle::Instance in = oracle::random_instance(rng, 6, 1);
  in.X << -2.5, -1.4, -0.2, 0.9, 1.8, 2.9;
  in.ls.setConstant(0.8);
  in.Z = in.X;
  const double exact = exact_lml(testutil::hyper_of(in), in.X, in.y).total;
  for (CollapsedKind k : {CollapsedKind::F1_Titsias, CollapsedKind::F4_Tight, CollapsedKind::F5_LogSum,
                          CollapsedKind::F8_GeneralC, CollapsedKind::F9_SharedM})
    EXPECT_NEAR(bound(k, in), exact, 1e-6) << to_string(k);
}

TEST(CollapsedBound, F3WithUnitScalingIsTitsias) {
  std::mt19937_64 rng(24);
  const oracle::Instance in = oracle::random_instance(rng, 12, 3);
  EXPECT_EQ(bound(CollapsedKind::F3_GivenM, in, Vector::Ones(12)), bound(CollapsedKind::F1_Titsias, in));
}

TEST(CollapsedBound, F3AtOptimalScalingIsF4) {
  std::mt19937_64 rng(25);
  for (int rep = 0; rep < 10; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 15, 4, 2);
    EXPECT_NEAR(bound(CollapsedKind::F3_GivenM, in, m_star(in)), bound(CollapsedKind::F4_Tight, in), 1e-10);
  }
}

TEST(CollapsedBound, F3NeverExceedsF4) {
  std::mt19937_64 rng(26);
  std::normal_distribution<double> g(0.0, 0.5);
  for (int rep = 0; rep < 10; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 10, 3);
    const double f4 = bound(CollapsedKind::F4_Tight, in);
    const Vector ms = m_star(in);
    for (int k = 0; k < 20; ++k) {
      Vector m = ms;
      for (Index i = 0; i < m.size(); ++i) m(i) *= std::exp(g(rng));
      EXPECT_LE(bound(CollapsedKind::F3_GivenM, in, m), f4 + 1e-10);
    }
  }
}

TEST(CollapsedBound, F3RejectsMissingOrBadScaling) {
  std::mt19937_64 rng(27);
  const oracle::Instance in = oracle::random_instance(rng, 4, 2);
  EXPECT_THROW(bound(CollapsedKind::F3_GivenM, in), InputError);
  EXPECT_THROW(bound(CollapsedKind::F3_GivenM, in, Vector::Ones(3)), InputError);
  EXPECT_THROW(bound(CollapsedKind::F3_GivenM, in, Vector::Zero(4)), InputError);
}

TEST(CollapsedBound, F8RefusesBeyondOracleCap) {
  std::mt19937_64 rng(28);
  const oracle::Instance in = oracle::random_instance(rng, 30, 2);
  BoundOptions opts;
  opts.oracle_cap = 10;
  EXPECT_THROW(collapsed_bound(CollapsedKind::F8_GeneralC, testutil::hyper_of(in), in.Z, in.X, in.y, std::nullopt, opts),
               CapabilityError);
}

TEST(CollapsedBound, OrderingChainOnRandomInstances) {
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> nd(1, 40), md(1, 10), dd(1, 3);
  const double slack = 1e-9;
  for (int rep = 0; rep < 200; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, nd(rng), md(rng), dd(rng), rep % 2 == 1);
    const double f1 = bound(CollapsedKind::F1_Titsias, in), f4 = bound(CollapsedKind::F4_Tight, in),
                 f5 = bound(CollapsedKind::F5_LogSum, in), f8 = bound(CollapsedKind::F8_GeneralC, in),
                 f9 = bound(CollapsedKind::F9_SharedM, in);
    const double ex = exact_lml(testutil::hyper_of(in), in.X, in.y).total;
    EXPECT_GE(f9 - f1, -slack);
    EXPECT_GE(f4 - f9, -slack);
    EXPECT_GE(f5 - f1, -slack);
    EXPECT_GE(f4 - f5, -slack);
    EXPECT_GE(f8 - f4, -slack);
    EXPECT_GE(ex - f8, -slack);
  }
}

TEST(CollapsedBound, LogSumAndSharedMAgree) {
  // trace(D_ff) and sum(d) are the same quantity, so the two forms coincide.
  std::mt19937_64 rng(30);
  for (int rep = 0; rep < 50; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 3 + rep % 30, 1 + rep % 7);
    const double f5 = bound(CollapsedKind::F5_LogSum, in), f9 = bound(CollapsedKind::F9_SharedM, in);
    EXPECT_NEAR(f5, f9, 1e-10 * (1.0 + std::abs(f5)));
  }
}

TEST(CollapsedBound, TermsSumToTotal) {
  std::mt19937_64 rng(31);
  const oracle::Instance in = oracle::random_instance(rng, 9, 3);
  const Hyperparams h = testutil::hyper_of(in);
  for (CollapsedKind k : {CollapsedKind::F1_Titsias, CollapsedKind::F3_GivenM, CollapsedKind::F4_Tight,
                          CollapsedKind::F5_LogSum, CollapsedKind::F8_GeneralC, CollapsedKind::F9_SharedM}) {
    const BoundValue b = collapsed_bound(k, h, in.Z, in.X, in.y, Vector::Constant(9, 0.5));
    EXPECT_NEAR(b.term_sum(), b.total, 1e-10) << to_string(k);
    EXPECT_TRUE(b.terms.contains("trace_or_scaling"));
  }
  const BoundValue e = exact_lml(h, in.X, in.y);
  EXPECT_NEAR(e.term_sum(), e.total, 1e-10);
  EXPECT_NEAR(e.term("const"), -4.5 * oracle::kLog2Pi, 1e-12);
}

TEST(CollapsedBound, F1TraceTermMatchesDense) {
  std::mt19937_64 rng(32);
  const oracle::Instance in = oracle::random_instance(rng, 11, 3);
  const BoundValue b = collapsed_bound(CollapsedKind::F1_Titsias, testutil::hyper_of(in), in.Z, in.X, in.y);
  EXPECT_NEAR(b.term("trace_or_scaling"), -in.dff().trace() / (2.0 * in.noise), 1e-9);
}

TEST(LogSumInequality, HoldsOnRandomVectors) {
  std::mt19937_64 rng(33);
  std::exponential_distribution<double> e(1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + rep % 25;
    const double s2 = 0.01 + e(rng);
    double lhs = 0.0, sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = e(rng) * (rep % 3);
      lhs += std::log1p(d / s2);
      sum += d;
    }
    EXPECT_LE(lhs, n * std::log1p(sum / (n * s2)) + 1e-12);
  }
}

TEST(OptimalM, SpecExamples) {
  Hyperparams h;
  h.log_noise_variance = std::log(0.4);
  CovBundle b;
  b.d.resize(3);
  b.d << 0.0, 0.4, 1e12;
  const Vector m = optimal_m(h, b);
  EXPECT_EQ(m(0), 1.0);
  EXPECT_NEAR(m(1), 0.5, 1e-15);
  EXPECT_LT(m(2), 1e-12);
  EXPECT_GT(m(2), 0.0);
}

TEST(OptimalQu, ZeroTargetsGiveZeroMean) {
  std::mt19937_64 rng(34);
  oracle::Instance in = oracle::random_instance(rng, 8, 3);
  in.y.setZero();
  EXPECT_EQ(optimal_qu(testutil::hyper_of(in), in.Z, in.X, in.y).mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(OptimalQu, MatchesClosedForm) {
  std::mt19937_64 rng(35);
  const oracle::Instance in = oracle::random_instance(rng, 10, 4);
  const VariationalGaussian q = optimal_qu(testutil::hyper_of(in), in.Z, in.X, in.y);
  const Matrix kuu = in.kuu(), kfu = in.kfu();
  const Matrix s = kuu * oracle::inv(kuu + kfu.transpose() * kfu / in.noise) * kuu;
  const Vector mean = s * oracle::inv(kuu) * kfu.transpose() * in.y / in.noise;
  EXPECT_LT((q.covariance() - s).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((q.mean - mean).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(OptimalQu, InterpolatesAtTinyNoise) {
  Hyperparams h;
  h.kernel = Kernel::squared_exponential(1.0, Vector::Ones(1));
  h.log_noise_variance = std::log(1e-6);
  Matrix X(5, 1);
  X << -2, -1, 0, 1, 2;
  Vector y(5);
  y << 0.3, -0.5, 1.1, 0.2, -0.9;
  const VariationalGaussian q = optimal_qu(h, X, X, y);
  const CovBundle b = build_bundle(h, X, X);
  const Vector mean = b.kfu * b.kuu_chol.transpose().triangularView<Eigen::Upper>().solve(
                                  b.kuu_chol.triangularView<Eigen::Lower>().solve(q.mean));
  EXPECT_LT((mean - y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(OptimalQu, UncollapsedAtOptimumRecoversF4) {
  std::mt19937_64 rng(36);
  for (int rep = 0; rep < 5; ++rep) {
    const oracle::Instance in = oracle::random_instance(rng, 2, 1);
    const Hyperparams h = testutil::hyper_of(in);
    SvgpState s = init_svgp(h, in.Z, Likelihood::gaussian(), ScalingMode::BetaShared);
    s.qu = {optimal_qu(h, in.Z, in.X, in.y)};
    s.scaling = ConditionalScaling::beta_shared(in.noise);
    EXPECT_LE(std::abs(elbo(s, in.X, in.y).total - bound(CollapsedKind::F4_Tight, in)), 1e-8);
  }
}
