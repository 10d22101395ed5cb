// Acceptance checks, one per criterion. Prints a single PASS/FAIL/SKIP line
// and exits 0, 1 or 77 (ctest's skip code).

#include "oracles.hpp"
#include "test_util.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/data.hpp"
#include "sparsegp/experiments.hpp"
#include "sparsegp/models.hpp"
#include "sparsegp/solvegp.hpp"
#include "sparsegp/training.hpp"
#include "sparsegp/variational.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace sparsegp;

namespace {

// Pinned tolerances.
constexpr double kOrderSlack = 1e-9;
constexpr double kOptimalMTol = 1e-10;
constexpr double kCollapsedTol = 1e-8;
constexpr double kMinibatchTol = 1e-10;
constexpr double kFdTol = 1e-4;
constexpr double kOrthTol = 1e-7;
constexpr double kSnelsonValueTol = 0.03;
constexpr double kModeAgreeTol = 0.02;
constexpr double kPaperTable1Tol = 0.05;
constexpr double kBenchmarkSlack = 0.01;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome bound_ordering() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> nd(1, 40), md(1, 10), dd(1, 3);
  double worst = 0.0;
  int bad = 0;
  const int instances = 250;
  for (int i = 0; i < instances; ++i) {
    const oracle::Instance in = oracle::random_instance(rng, nd(rng), md(rng), dd(rng), i % 2 == 1);
    const Hyperparams h = testutil::hyper_of(in);
    auto f = [&](CollapsedKind k) { return collapsed_bound(k, h, in.Z, in.X, in.y).total; };
    const double f1 = f(CollapsedKind::F1_Titsias), f5 = f(CollapsedKind::F5_LogSum), f4 = f(CollapsedKind::F4_Tight),
                 f8 = f(CollapsedKind::F8_GeneralC), f9 = f(CollapsedKind::F9_SharedM),
                 ex = exact_lml(h, in.X, in.y).total;
    double v = 0.0;
    for (auto [a, b] : {std::pair{f1, f5}, {f5, f4}, {f4, f8}, {f8, ex}, {f1, f9}, {f9, f4}}) v = std::max(v, a - b);
    worst = std::max(worst, v);
    bad += v > kOrderSlack;
  }
  const double secs = since(t0);
  const bool ok = bad == 0 && secs < 60.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("%d instances, %d violations, worst a-b %.3g, %.1f s", instances, bad, worst, secs)};
}

Outcome optimal_m() {
  std::mt19937_64 rng(2025);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double worst_excess = -1e300, worst_gap = 0.0;
  for (int i = 0; i < 20; ++i) {
    const oracle::Instance in = oracle::random_instance(rng, 5 + i, 1 + i % 6, 1 + i % 2, i % 3 == 0);
    const Hyperparams h = testutil::hyper_of(in);
    const Vector star = optimal_m(h, build_bundle(h, in.Z, in.X));
    const double f4 = collapsed_bound(CollapsedKind::F4_Tight, h, in.Z, in.X, in.y).total;
    worst_gap = std::max(worst_gap, std::abs(collapsed_bound(CollapsedKind::F3_GivenM, h, in.Z, in.X, in.y, star).total - f4));
    for (int k = 0; k < 50; ++k) {
      Vector m = star;
      for (Index n = 0; n < m.size(); ++n) m(n) = std::exp(std::log(m(n)) + u(rng));
      worst_excess = std::max(worst_excess, collapsed_bound(CollapsedKind::F3_GivenM, h, in.Z, in.X, in.y, m).total - f4);
    }
  }
  const bool ok = worst_excess <= kOrderSlack && worst_gap <= kOptimalMTol;
  return {ok ? Status::Pass : Status::Fail,
          fmt("20 instances x 50 perturbations, max F3-F4 %.3g, |F3(m*)-F4| %.3g", worst_excess, worst_gap)};
}

Outcome collapsed_consistency() {
  std::mt19937_64 rng(2026);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const oracle::Instance in = oracle::random_instance(rng, 3 + i % 30, 1 + i % 8, 1 + i % 3, i % 2 == 0);
    const Hyperparams h = testutil::hyper_of(in);
    SvgpState s = init_svgp(h, in.Z, Likelihood::gaussian(), ScalingMode::BetaShared, in.X.rows());
    s.qu = {optimal_qu(h, in.Z, in.X, in.y)};
    s.scaling = ConditionalScaling::beta_shared(in.noise);
    worst = std::max(worst, std::abs(elbo(s, in.X, in.y).total -
                                     collapsed_bound(CollapsedKind::F4_Tight, h, in.Z, in.X, in.y).total));
    s.scaling = ConditionalScaling::identity();
    worst = std::max(worst, std::abs(elbo(s, in.X, in.y).total -
                                     collapsed_bound(CollapsedKind::F1_Titsias, h, in.Z, in.X, in.y).total));
  }
  return {worst <= kCollapsedTol ? Status::Pass : Status::Fail, fmt("50 instances, max deviation %.3g", worst)};
}

Outcome minibatch_unbiased() {
  std::mt19937_64 rng(2027);
  double worst = 0.0;
  for (ScalingMode mode : {ScalingMode::Identity, ScalingMode::PerPoint, ScalingMode::BetaShared, ScalingMode::ScalarShared}) {
    const oracle::Instance in = oracle::random_instance(rng, 6, 3);
    SvgpState s = init_svgp(testutil::hyper_of(in), in.Z, Likelihood::gaussian(), mode, 6);
    s.qu = {VariationalGaussian{testutil::random_vector(rng, 3), testutil::random_chol(rng, 3)}};
    double acc = 0.0;
    int count = 0;
    for (Index a = 0; a < 6; ++a)
      for (Index b = a + 1; b < 6; ++b) {
        const std::vector<Index> batch = {a, b};
        acc += minibatch_elbo(s, in.X, in.y, batch).total;
        ++count;
      }
    worst = std::max(worst, std::abs(acc / count - elbo(s, in.X, in.y).total));
  }
  return {worst <= kMinibatchTol ? Status::Pass : Status::Fail,
          fmt("N=6, all 15 pairs, 4 scaling modes, max |mean - full| %.3g", worst)};
}

Outcome snelson_repro() {
  const auto t0 = Clock::now();
  const SnelsonResult r = run_snelson(snelson());
  const double secs = since(t0);
  const auto& a = r.sgpr;
  const auto& b = r.tsgpr;
  const bool ranked = b.objective >= a.objective && b.noise_variance < a.noise_variance && secs < 120.0;
  std::string detail = fmt("objective %.4f vs %.4f, noise %.4f vs %.4f, kvar %.4f vs %.4f (t-sgpr vs sgpr), %.1f s",
                           b.objective, a.objective, b.noise_variance, a.noise_variance, b.kernel_variance,
                           a.kernel_variance, secs);
  if (!r.canonical) {
    detail += "; value targets SKIP: canonical Snelson data absent, stand-in used";
    return {ranked ? Status::Pass : Status::Fail, detail};
  }
  const bool values = std::abs(b.noise_variance - 0.115) <= kSnelsonValueTol &&
                      std::abs(a.noise_variance - 0.126) <= kSnelsonValueTol &&
                      std::abs(b.kernel_variance - 0.107) <= kSnelsonValueTol &&
                      std::abs(a.kernel_variance - 0.087) <= kSnelsonValueTol;
  return {ranked && values ? Status::Pass : Status::Fail, detail + (values ? "; values match" : "; values off")};
}

Outcome table1_repro() {
  std::ostringstream os;
  bool ok = true;
  int ran = 0;
  for (const char* name : {"wine", "solar", "pumadyn32nm"}) {
    if (!dataset_available(name)) {
      os << name << " SKIP (not supplied); ";
      continue;
    }
    ++ran;
    const Table1Row row = run_table1(load_named(name));
    const bool agree = std::abs(row.full.rmse - row.simplified.rmse) <= kModeAgreeTol &&
                       std::abs(row.full.mean_log_lik - row.simplified.mean_log_lik) <= kModeAgreeTol;
    const double need = std::string(name) == "pumadyn32nm" ? 50.0 : 2.0;
    const bool fast = row.speedup >= need;
    os << name << fmt(": rmse %.3f/%.3f ll %.3f/%.3f (full/simplified) speedup %.0fx", row.full.rmse,
                      row.simplified.rmse, row.full.mean_log_lik, row.simplified.mean_log_lik, row.speedup);
    os << (agree ? " agree" : " DISAGREE") << (fast ? "" : " SLOW");
    ok = ok && agree && fast;
    if (std::string(name) == "wine") {
      const bool paper = std::abs(row.simplified.rmse - 0.47) <= kPaperTable1Tol &&
                         std::abs(row.simplified.mean_log_lik + 0.66) <= kPaperTable1Tol;
      os << (paper ? " paper values matched" : " paper values (0.47, -0.66) NOT matched");
      ok = ok && paper;
    }
    os << "; ";
  }
  if (ran == 0) return {Status::Skip, os.str() + "no Table 1 dataset present"};
  return {ok ? Status::Pass : Status::Fail, os.str()};
}

Outcome gradient_contract() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2028);
  std::normal_distribution<double> g(0.0, 0.1);
  double worst = 0.0;
  std::string worst_name;
  int checked = 0;
  auto record = [&](const std::string& name, const FdReport& r) {
    ++checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name + " " + r.worst_param;
    }
  };
  for (CollapsedKind k : {CollapsedKind::Exact, CollapsedKind::F1_Titsias, CollapsedKind::F3_GivenM,
                          CollapsedKind::F4_Tight, CollapsedKind::F5_LogSum, CollapsedKind::F9_SharedM}) {
    for (bool matern : {false, true}) {
      const oracle::Instance in = oracle::random_instance(rng, 12, 4, 2, matern);
      const CollapsedObjective obj(k, in.X, in.y, matern ? KernelFamily::Matern32 : KernelFamily::SquaredExponential);
      record(to_string(k), fd_check(obj, pack_collapsed(k, testutil::hyper_of(in), in.Z,
                                                        Vector::LinSpaced(12, 0.3, 0.9).eval())));
    }
  }
  const Dataset reg = synthetic_regression(12, 2, 7);
  const Dataset cls = synthetic_classification(12, 3, 7);
  const Matrix y3 = synthetic_regression(12, 3, 8).X;
  for (const std::string& name : model_names()) {
    ModelConfig c;
    c.kind = model_kind_from_string(name);
    c.num_inducing = 4;
    c.mc_samples = 2;
    c.latent_dim = 2;
    std::vector<std::pair<Likelihood, const Dataset*>> liks = {{Likelihood::gaussian(), &reg}};
    if (c.kind == ModelKind::Svgp || c.kind == ModelKind::TSvgp || c.kind == ModelKind::SolveGp ||
        c.kind == ModelKind::TSolveGp)
      liks.push_back({Likelihood::categorical(3, 8, 1), &cls});
    for (const auto& [lik, ds] : liks) {
      c.lik = lik;
      const Model m = make_model(c, ds->X, is_gplvm(c.kind) ? y3 : Matrix(ds->y));
      ParamVector p = m.init;
      for (Index i = 0; i < p.size(); ++i) p.values()(i) += g(rng);
      record(name, fd_check(*m.objective, p));
    }
  }
  const double secs = since(t0);
  return {worst <= kFdTol && secs < 60.0 ? Status::Pass : Status::Fail,
          fmt("%d objectives, worst relative error %.3g (%s), %.1f s", checked, worst, worst_name.c_str(), secs)};
}

Outcome solvegp_oracle() {
  std::mt19937_64 rng(2029);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  int count = 0;
  for (ScalingMode mode : {ScalingMode::Identity, ScalingMode::BetaShared}) {
    for (int rep = 0; rep < 4; ++rep) {
      for (Index n = 1; n <= 5; ++n) {
        const oracle::Instance in = oracle::random_instance(rng, n, 1);
        // Zv almost on top of Zu makes the joint prior near singular; the ELBO then reaches
        // 1e5 nats and a 1e-7 absolute match is below round-off for either side.
        double zv_at = u(rng);
        while (std::abs(zv_at - in.Z(0, 0)) < 0.1 * in.ls(0)) zv_at = u(rng);
        const Matrix zv = Matrix::Constant(1, 1, zv_at);
        const Hyperparams h = testutil::hyper_of(in);
        OrthState s = init_solvegp(h, in.Z, zv, Likelihood::gaussian(), mode, n);
        s.qu = {VariationalGaussian{testutil::random_vector(rng, 1), testutil::random_chol(rng, 1)}};
        s.qv = {VariationalGaussian{testutil::random_vector(rng, 1), testutil::random_chol(rng, 1, 0.3)}};
        Vector m = Vector::Ones(n);
        if (mode == ScalingMode::BetaShared) {
          s.scaling = ConditionalScaling::beta_shared(0.05 + 0.3 * rep);
          // Dense D_ff diagonal over the joint inducing set.
          Matrix z(2, 1);
          z << in.Z, zv;
          const Matrix kfz = oracle::gram(in.X, z, in.var, in.ls);
          const Vector d = (in.kff() - kfz * oracle::inv(oracle::gram(z, z, in.var, in.ls)) * kfz.transpose()).diagonal();
          m = realize_m(s.scaling, d);
        }
        const double expected = oracle::dense_solvegp_elbo(in.X, in.y, in.Z, zv, in.var, in.ls, in.noise, s.qu[0].mean,
                                                           s.qu[0].covariance(), s.qv[0].mean, s.qv[0].covariance(), m);
        worst = std::max(worst, std::abs(solvegp_elbo(s, in.X, in.y).total - expected));
        ++count;
      }
    }
  }
  return {worst <= kOrthTol ? Status::Pass : Status::Fail,
          fmt("%d instances (N 1..5, Mu = Mv = 1, identity and beta_shared), max deviation %.3g", count, worst)};
}

Outcome gplvm_improvement() {
  std::ostringstream os;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OilflowOptions o;
    o.seed = seed;
    const OilflowResult r = run_oilflow(o);
    const bool win = r.tv_elbo >= r.v_elbo;
    const bool quick = r.v_seconds < 300.0 && r.tv_seconds < 300.0;
    ok = ok && win && quick;
    os << fmt("seed %d: TV %.1f V %.1f (%.0f/%.0f s)%s; ", static_cast<int>(seed), r.tv_elbo, r.v_elbo, r.tv_seconds,
              r.v_seconds, win ? "" : " TV BELOW V");
  }
  return {ok ? Status::Pass : Status::Fail, os.str()};
}

Outcome benchmark_substitute() {
  std::ostringstream os;
  bool ok = true;
  for (BenchmarkTask task : {BenchmarkTask::Regression, BenchmarkTask::Classification}) {
    double d_svgp = 0.0, d_solve = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      BenchmarkOptions o;
      o.task = task;
      o.n = task == BenchmarkTask::Regression ? 2000 : 500;
      o.seed = seed;
      const BenchmarkResult r = run_benchmark(o);
      d_svgp += (r.test_log_lik.at("t-svgp") - r.test_log_lik.at("svgp")) / 5.0;
      d_solve += (r.test_log_lik.at("t-solvegp") - r.test_log_lik.at("solvegp")) / 5.0;
    }
    const bool pass = d_svgp >= -kBenchmarkSlack && d_solve >= -kBenchmarkSlack;
    ok = ok && pass;
    os << (task == BenchmarkTask::Regression ? "regression" : "classification")
       << fmt(": mean ll gain t-svgp %+.4f, t-solvegp %+.4f; ", d_svgp, d_solve);
  }
  return {ok ? Status::Pass : Status::Fail, os.str() + "5 paired seeds each"};
}

const std::vector<std::function<Outcome()>> kCriteria = {
    bound_ordering, optimal_m,       collapsed_consistency, minibatch_unbiased, snelson_repro,
    table1_repro,   gradient_contract, solvegp_oracle,      gplvm_improvement,  benchmark_substitute};

int report(int id) {
  Outcome o;
  try {
    o = kCriteria.at(static_cast<std::size_t>(id - 1))();
  } catch (const std::exception& e) {
    o = {Status::Fail, std::string("threw: ") + e.what()};
  }
  const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
  std::cout << "criterion " << id << ": " << tag << "  " << o.detail << std::endl;
  return o.status == Status::Pass ? 0 : o.status == Status::Fail ? 1 : 77;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance checks");
  int criterion = 0;
  app.add_option("--criterion", criterion, "1-10; omit to run all")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (criterion != 0) return report(criterion);
  int worst = 0;
  for (int id = 1; id <= 10; ++id) {
    const int code = report(id);
    if (code == 1) worst = 1;
  }
  return worst;
}
