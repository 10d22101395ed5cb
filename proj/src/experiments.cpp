#include "sparsegp/experiments.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/errors.hpp"
#include "sparsegp/gplvm.hpp"
#include "sparsegp/random.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace sparsegp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TrainConfig train_config(const std::string& id, OptimizerKind opt, int iterations, double lr, std::uint64_t seed) {
  TrainConfig tc;
  tc.objective_id = id;
  tc.optimizer = opt;
  tc.iterations = iterations;
  tc.adam.lr = lr;
  tc.seed = seed;
  tc.trace_every = 10;
  return tc;
}

void append_band(std::vector<Series>& out, const std::string& label, const Vector& grid, const Prediction& p,
                 double noise) {
  Series mean{label + ".mean", {}, {}}, lo{label + ".lower", {}, {}}, hi{label + ".upper", {}, {}};
  for (Index i = 0; i < grid.size(); ++i) {
    const double sd = std::sqrt(p.var(i, 0) + noise);
    mean.x.push_back(grid(i));
    mean.y.push_back(p.mean(i, 0));
    lo.x.push_back(grid(i));
    lo.y.push_back(p.mean(i, 0) - 2.0 * sd);
    hi.x.push_back(grid(i));
    hi.y.push_back(p.mean(i, 0) + 2.0 * sd);
  }
  out.push_back(std::move(mean));
  out.push_back(std::move(lo));
  out.push_back(std::move(hi));
}

}  // namespace

void write_series(const std::string& path, const std::vector<Series>& series) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "label,x,y\n" << std::setprecision(10);
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) out << s.label << ',' << s.x[i] << ',' << s.y[i] << '\n';
}

SnelsonResult run_snelson(const Dataset& ds, const SnelsonOptions& opts) {
  if (ds.X.cols() != 1) throw InputError("run_snelson: expects 1-D inputs");
  SnelsonResult res;
  res.canonical = snelson_is_canonical() && ds.name == "snelson_canonical";
  res.dataset_hash = ds.hash;

  const double lo = ds.X.minCoeff(), hi = ds.X.maxCoeff();
  const double pad = 0.1 * (hi - lo);
  const Vector grid = Vector::LinSpaced(opts.grid_points, lo - pad, hi + pad);
  Series data{"data", {}, {}};
  for (Index i = 0; i < ds.size(); ++i) {
    data.x.push_back(ds.X(i, 0));
    data.y.push_back(ds.y(i, 0));
  }
  res.curves.push_back(std::move(data));

  for (ModelKind kind : {ModelKind::Sgpr, ModelKind::TSgpr}) {
    ModelConfig mc;
    mc.kind = kind;
    mc.num_inducing = opts.num_inducing;
    mc.seed = opts.seed;
    Model model = make_model(mc, ds.X, ds.y);
    const auto t0 = Clock::now();
    FitResult fr = fit(train_config(to_string(kind), opts.optimizer, opts.iterations, opts.lr, opts.seed),
                       *model.objective, model.init);
    SnelsonFit f;
    f.method = to_string(kind);
    f.seconds = seconds_since(t0);
    f.objective = evaluate(*model.objective, fr.params).total;
    const Hyperparams h = read_hyperparams(fr.params, mc.family);
    f.noise_variance = h.noise_variance();
    f.kernel_variance = h.kernel.variance();
    f.lengthscale = std::exp(h.kernel.log_lengthscales(0));
    f.Z = fr.params.get(kInducing);
    f.trace = fr.trace;
    const Prediction p = predict_model(mc, fr.params, ds.X, ds.y, Matrix(grid));
    append_band(res.curves, f.method, grid, p, f.noise_variance);
    Series z{f.method + ".Z", {}, {}};
    for (Index i = 0; i < f.Z.rows(); ++i) {
      z.x.push_back(f.Z(i, 0));
      z.y.push_back(0.0);
    }
    res.curves.push_back(std::move(z));
    (kind == ModelKind::Sgpr ? res.sgpr : res.tsgpr) = std::move(f);
  }
  return res;
}

Table1Row run_table1(const Dataset& ds, const Table1Options& opts) {
  Table1Row row;
  row.dataset = ds.name;
  row.n = ds.size();
  row.d = ds.X.cols();
  const Split sp = split(ds, opts.test_fraction, opts.seed);
  const double shift = sp.train.standardization.y_mean(0);
  const double scale = sp.train.standardization.y_scale(0);
  const Vector y_test = (sp.test.y.col(0).array() * scale + shift).matrix();

  ModelConfig mc;
  mc.kind = ModelKind::TSgpr;
  mc.num_inducing = opts.num_inducing;
  mc.seed = opts.seed;
  Model model = make_model(mc, sp.train.X, sp.train.y);
  auto t0 = Clock::now();
  FitResult fr = fit(train_config("t-sgpr", opts.optimizer, opts.iterations, 0.01, opts.seed), *model.objective,
                     model.init);
  row.train_seconds = seconds_since(t0);
  row.objective = fr.final_objective;
  const double noise = noise_variance_of(fr.params);

  for (VarianceMode mode : {VarianceMode::Simplified, VarianceMode::Full}) {
    t0 = Clock::now();
    const Prediction p = predict_model(mc, fr.params, sp.train.X, sp.train.y, sp.test.X, mode, opts.full_cap);
    const double secs = seconds_since(t0);
    const RegressionMetrics m = regression_metrics(p.mean.col(0), p.var.col(0), noise, y_test, shift, scale);
    ModeMetrics& out = mode == VarianceMode::Full ? row.full : row.simplified;
    out.rmse = m.rmse;
    out.mean_log_lik = m.mean_log_lik;
    out.seconds = secs;
  }
  row.speedup = row.full.seconds / std::max(row.simplified.seconds, 1e-9);
  return row;
}

OilflowResult run_oilflow(const OilflowOptions& opts) {
  OilflowResult res;
  res.seed = opts.seed;
  res.n = opts.n;
  const Dataset ds = oilflow_surrogate(opts.n, opts.p, opts.seed);
  Matrix Y = ds.X;
  standardize(Y);
  const std::uint64_t eval_seed = hash_key(opts.seed, 0xe7a1);

  for (ModelKind kind : {ModelKind::Gplvm, ModelKind::TGplvm}) {
    ModelConfig mc;
    mc.kind = kind;
    mc.num_inducing = opts.num_inducing;
    mc.latent_dim = opts.latent_dim;
    mc.mc_samples = opts.mc_train;
    mc.seed = opts.seed;
    Model model = make_model(mc, Matrix(), Y);
    const auto t0 = Clock::now();
    FitResult fr = fit(train_config(to_string(kind), OptimizerKind::Adam, opts.iterations, opts.lr, opts.seed),
                       *model.objective, model.init);
    if (opts.settle_iterations > 0 && !fr.diverged) {
      fr = fit(train_config(to_string(kind), OptimizerKind::Adam, opts.settle_iterations, opts.settle_lr,
                            hash_key(opts.seed, 0x5e77)),
               *model.objective, fr.params);
    }
    GplvmInit gi;
    gi.latent_dim = opts.latent_dim;
    gi.num_inducing = opts.num_inducing;
    gi.seed = opts.seed;
    const GplvmScaling mode = is_tight(kind) ? GplvmScaling::PointwiseOptimal : GplvmScaling::Identity;
    const GplvmState like = init_gplvm(Y, mode, gi);
    const double value = gplvm_elbo(unpack_gplvm(fr.params, like), Y, opts.mc_eval, eval_seed).total;
    const double secs = seconds_since(t0);
    if (kind == ModelKind::Gplvm) {
      res.v_elbo = value;
      res.v_seconds = secs;
    } else {
      res.tv_elbo = value;
      res.tv_seconds = secs;
    }
  }
  return res;
}

BenchmarkResult run_benchmark(const BenchmarkOptions& opts) {
  BenchmarkResult res;
  res.seed = opts.seed;
  const bool regression = opts.task == BenchmarkTask::Regression;
  const Dataset ds = regression ? synthetic_regression(opts.n, opts.input_dim, opts.seed)
                                : synthetic_classification(opts.n, opts.num_classes, opts.seed);
  SplitOptions so;
  so.standardize_y = regression;
  const Split sp = split(ds, 0.1, opts.seed, so);
  const double log_scale = regression ? std::log(sp.train.standardization.y_scale(0)) : 0.0;

  for (ModelKind kind : {ModelKind::Svgp, ModelKind::TSvgp, ModelKind::SolveGp, ModelKind::TSolveGp}) {
    ModelConfig mc;
    mc.kind = kind;
    mc.num_inducing = opts.num_inducing;
    mc.seed = opts.seed;
    mc.lik = regression ? Likelihood::gaussian() : Likelihood::categorical(opts.num_classes, 32, opts.seed);
    Model model = make_model(mc, sp.train.X, sp.train.y);
    const auto t0 = Clock::now();
    FitResult fr = fit(train_config(to_string(kind), OptimizerKind::Adam, opts.iterations, opts.lr, opts.seed),
                       *model.objective, model.init);
    const Prediction p = predict_model(mc, fr.params, sp.train.X, sp.train.y, sp.test.X);
    const Vector ll = test_log_density(mc, p, sp.test.y, noise_variance_of(fr.params));
    res.test_log_lik[to_string(kind)] = ll.mean() - log_scale;
    res.seconds[to_string(kind)] = seconds_since(t0);
  }
  return res;
}

BoundComparison compare_bounds(const Hyperparams& h, const Matrix& Z, const Matrix& X, const Vector& y, double tol,
                               Index dense_cap) {
  BoundComparison out;
  std::map<std::string, double> v;
  BoundOptions bo;
  bo.oracle_cap = dense_cap;
  for (CollapsedKind k : {CollapsedKind::F1_Titsias, CollapsedKind::F5_LogSum, CollapsedKind::F9_SharedM,
                          CollapsedKind::F4_Tight}) {
    v[to_string(k)] = collapsed_bound(k, h, Z, X, y, std::nullopt, bo).total;
  }
  const bool dense = X.rows() <= dense_cap;
  if (dense) {
    v[to_string(CollapsedKind::F8_GeneralC)] = collapsed_bound(CollapsedKind::F8_GeneralC, h, Z, X, y, std::nullopt, bo).total;
    v[to_string(CollapsedKind::Exact)] = exact_lml(h, X, y).total;
  }
  for (const char* name : {"F1", "F5", "F9", "F4", "F8", "exact"}) {
    if (v.count(name)) out.totals.emplace_back(name, v[name]);
  }
  std::vector<std::pair<std::string, std::string>> chain = {{"F1", "F5"}, {"F5", "F4"}, {"F1", "F9"}, {"F9", "F4"}};
  if (dense) {
    chain.emplace_back("F4", "F8");
    chain.emplace_back("F8", "exact");
  }
  out.worst_violation = -std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : chain) {
    const double gap = v[a] - v[b];
    if (gap > out.worst_violation) {
      out.worst_violation = gap;
      out.worst_pair = a + " <= " + b;
    }
  }
  out.ordered = out.worst_violation <= tol;
  return out;
}

}  // namespace sparsegp
