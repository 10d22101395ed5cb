#include "sparsegp/cli.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/errors.hpp"
#include "sparsegp/experiments.hpp"
#include "sparsegp/gplvm.hpp"
#include "sparsegp/models.hpp"
#include "sparsegp/random.hpp"
#include "sparsegp/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>

namespace sparsegp {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// One line of the results log.
struct Record {
  json j;
  bool failed = false;

  explicit Record(const std::string& command) {
    j["command"] = command;
    j["config"] = json::object();
    j["metrics"] = json::object();
    j["artifacts"] = json::object();
  }

  void metric(const std::string& key, double v) {
    if (std::isfinite(v)) {
      j["metrics"][key] = v;
    } else {
      j["metrics"][key] = "nan";
      failed = true;
    }
  }
};

void append_record(Record& r, std::ostream& err) {
  r.j["failed"] = r.failed || r.j.contains("error");
  try {
    fs::create_directories(results_dir());
    std::ofstream log(fs::path(results_dir()) / "results.jsonl", std::ios::app);
    if (!log) throw Error("cannot open the results log");
    log << r.j.dump() << '\n';
  } catch (const std::exception& e) {
    err << "warning: results log not written: " << e.what() << '\n';
  }
}

struct FitArgs {
  std::string objective = "t-sgpr";
  DatasetSpec data;
  Index inducing = 20;
  int iters = 1000;
  Index batch = 0;
  std::string optimizer = "adam";
  double lr = 0.01;
  std::string kernel = "se";
  bool no_ard = false;
  std::string likelihood = "gaussian";
  double test_fraction = 0.1;
  int mc = 8;
  Index latent_dim = 2;
  std::string checkpoint;
};

std::map<std::string, std::string> to_meta(const FitArgs& a) {
  return {{"objective", a.objective},
          {"dataset", a.data.name},
          {"n", std::to_string(a.data.n)},
          {"d", std::to_string(a.data.d)},
          {"classes", std::to_string(a.data.classes)},
          {"seed", std::to_string(a.data.seed)},
          {"inducing", std::to_string(a.inducing)},
          {"kernel", a.kernel},
          {"ard", a.no_ard ? "false" : "true"},
          {"likelihood", a.likelihood},
          {"test_fraction", std::to_string(a.test_fraction)},
          {"mc", std::to_string(a.mc)},
          {"latent_dim", std::to_string(a.latent_dim)}};
}

FitArgs from_meta(const std::map<std::string, std::string>& m) {
  auto get = [&](const char* k) {
    auto it = m.find(k);
    if (it == m.end()) throw DataError(std::string("checkpoint is missing meta field '") + k + "'");
    return it->second;
  };
  FitArgs a;
  a.objective = get("objective");
  a.data.name = get("dataset");
  a.data.n = std::stoll(get("n"));
  a.data.d = std::stoll(get("d"));
  a.data.classes = std::stoi(get("classes"));
  a.data.seed = std::stoull(get("seed"));
  a.inducing = std::stoll(get("inducing"));
  a.kernel = get("kernel");
  a.no_ard = get("ard") == "false";
  a.likelihood = get("likelihood");
  a.test_fraction = std::stod(get("test_fraction"));
  a.mc = std::stoi(get("mc"));
  a.latent_dim = std::stoll(get("latent_dim"));
  return a;
}

json config_json(const FitArgs& a) {
  json j;
  for (const auto& [k, v] : to_meta(a)) j[k] = v;
  j["iters"] = a.iters;
  j["batch"] = a.batch;
  j["optimizer"] = a.optimizer;
  j["lr"] = a.lr;
  return j;
}

ModelConfig model_config(const FitArgs& a) {
  ModelConfig mc;
  mc.kind = model_kind_from_string(a.objective);
  mc.family = kernel_family_from_string(a.kernel);
  mc.ard = !a.no_ard;
  mc.num_inducing = a.inducing;
  mc.seed = a.data.seed;
  mc.mc_samples = a.mc;
  mc.latent_dim = a.latent_dim;
  if (a.likelihood == "gaussian") {
    mc.lik = Likelihood::gaussian();
  } else if (a.likelihood == "bernoulli") {
    mc.lik = Likelihood::bernoulli();
  } else if (a.likelihood == "categorical") {
    mc.lik = Likelihood::categorical(a.data.classes, 32, a.data.seed);
  } else {
    throw InputError("unknown likelihood '" + a.likelihood + "'");
  }
  return mc;
}

struct Prepared {
  Dataset ds;
  Split sp;
  Matrix Y;  // GPLVM observations, standardized
};

Prepared prepare(const FitArgs& a, const ModelConfig& mc) {
  Prepared p;
  p.ds = resolve_dataset(a.data);
  if (is_gplvm(mc.kind)) {
    p.Y = p.ds.X;
    standardize(p.Y);
    return p;
  }
  SplitOptions so;
  so.standardize_y = mc.lik.kind == LikelihoodKind::Gaussian;
  p.sp = split(p.ds, a.test_fraction, a.data.seed, so);
  return p;
}

std::string scaling_name(ModelKind kind) {
  if (is_gplvm(kind)) return is_tight(kind) ? "pointwise_optimal" : "identity";
  return is_tight(kind) ? to_string(ScalingMode::BetaShared) : to_string(ScalingMode::Identity);
}

void add_fit_options(CLI::App* c, FitArgs& a) {
  c->add_option("--objective", a.objective, "Objective to train")->check(CLI::IsMember(model_names()))->capture_default_str();
  c->add_option("--dataset", a.data.name, "Manifest name, generator or CSV path")->capture_default_str();
  c->add_option("--n", a.data.n, "Rows for generated datasets")->capture_default_str();
  c->add_option("--dim", a.data.d, "Input (or output) dimension for generated datasets")->capture_default_str();
  c->add_option("--classes", a.data.classes, "Classes for synthetic-classification")->capture_default_str();
  c->add_option("--seed", a.data.seed, "Seed for data, split, initialization and training")->capture_default_str();
  c->add_option("-M,--inducing", a.inducing, "Number of inducing points")->capture_default_str();
  c->add_option("--iters", a.iters, "Optimizer iterations")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--batch", a.batch, "Mini-batch size, 0 for full batch")->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--optimizer", a.optimizer, "adam or lbfgs")->check(CLI::IsMember({"adam", "lbfgs"}))->capture_default_str();
  c->add_option("--lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--kernel", a.kernel, "se or matern32")->check(CLI::IsMember({"se", "matern32"}))->capture_default_str();
  c->add_flag("--no-ard", a.no_ard, "Share one lengthscale across input dimensions");
  c->add_option("--likelihood", a.likelihood, "gaussian, bernoulli or categorical")
      ->check(CLI::IsMember({"gaussian", "bernoulli", "categorical"}))
      ->capture_default_str();
  c->add_option("--test-fraction", a.test_fraction, "Held-out fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c->add_option("--mc-samples", a.mc, "GPLVM Monte Carlo samples per step")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--latent-dim", a.latent_dim, "GPLVM latent dimension")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint path (default: results dir)");
}

int cmd_fit(const FitArgs& a, Record& r, std::ostream& out) {
  r.j["config"] = config_json(a);
  r.j["seed"] = a.data.seed;
  const ModelConfig mc = model_config(a);
  const Prepared p = prepare(a, mc);
  r.j["dataset"] = p.ds.name;
  r.j["dataset_hash"] = p.ds.hash;

  const Matrix& Xtr = is_gplvm(mc.kind) ? p.Y : p.sp.train.X;
  const Matrix& ytr = is_gplvm(mc.kind) ? p.Y : p.sp.train.y;
  Model model = make_model(mc, Xtr, ytr);

  TrainConfig tc;
  tc.objective_id = a.objective;
  tc.optimizer = optimizer_from_string(a.optimizer);
  tc.iterations = a.iters;
  tc.batch_size = a.batch;
  tc.seed = a.data.seed;
  tc.adam.lr = a.lr;
  tc.trace_every = 10;
  const std::string ckpt_path = a.checkpoint.empty()
                                    ? (fs::path(results_dir()) / (a.objective + "-seed" + std::to_string(a.data.seed) + ".ckpt.json")).string()
                                    : a.checkpoint;
  fs::create_directories(fs::absolute(ckpt_path).parent_path());
  tc.checkpoint_path = ckpt_path;

  const auto t0 = Clock::now();
  const FitResult fr = fit(tc, *model.objective, model.init);
  const double wall = seconds_since(t0);

  Checkpoint c;
  c.objective_id = a.objective;
  c.params = fr.params;
  c.scaling_mode = scaling_name(mc.kind);
  c.dataset_hash = p.ds.hash;
  const std::size_t keep = std::min<std::size_t>(fr.trace.size(), 20);
  c.trace_tail.assign(fr.trace.end() - static_cast<std::ptrdiff_t>(keep), fr.trace.end());
  c.meta = to_meta(a);
  save_checkpoint(ckpt_path, c);
  r.j["artifacts"]["checkpoint"] = ckpt_path;

  const double elbo = evaluate(*model.objective, fr.params).total;
  r.metric("elbo", elbo);
  r.metric("elbo_per_point", elbo / static_cast<double>(Xtr.rows()));
  r.metric("iterations", fr.iterations_run);
  r.metric("wall_time", wall);
  out << a.objective << " on " << p.ds.name << ": objective " << std::setprecision(8) << elbo << " after "
      << fr.iterations_run << " iterations (" << std::setprecision(3) << wall << " s)\n";

  if (!is_gplvm(mc.kind)) {
    const Prediction pred = predict_model(mc, fr.params, p.sp.train.X, p.sp.train.y, p.sp.test.X);
    const double noise = noise_variance_of(fr.params);
    if (mc.lik.kind == LikelihoodKind::Gaussian) {
      const double shift = p.sp.train.standardization.y_mean(0);
      const double scale = p.sp.train.standardization.y_scale(0);
      const Vector y_orig = (p.sp.test.y.col(0).array() * scale + shift).matrix();
      const RegressionMetrics m = regression_metrics(pred.mean.col(0), pred.var.col(0), noise, y_orig, shift, scale);
      r.metric("rmse", m.rmse);
      r.metric("log_likelihood", m.mean_log_lik);
      out << "test rmse " << m.rmse << ", mean log-likelihood " << m.mean_log_lik << '\n';
    } else {
      const Vector ll = test_log_density(mc, pred, p.sp.test.y, noise);
      Index wrong = 0;
      for (Index i = 0; i < pred.mean.rows(); ++i) {
        Index label = 0;
        if (pred.mean.cols() == 1) {
          label = pred.mean(i, 0) > 0.0 ? 1 : 0;
        } else {
          pred.mean.row(i).maxCoeff(&label);
        }
        wrong += label != static_cast<Index>(std::lround(p.sp.test.y(i, 0)));
      }
      const double err_rate = static_cast<double>(wrong) / static_cast<double>(pred.mean.rows());
      r.metric("log_likelihood", ll.mean());
      r.metric("error_rate", err_rate);
      out << "test mean log-likelihood " << ll.mean() << ", error rate " << err_rate << '\n';
    }
  }
  if (fr.diverged) {
    r.j["error"] = fr.message;
    out << "diverged: " << fr.message << " (last good parameters saved)\n";
    return 1;
  }
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string mode = "simplified";
  std::string output;
  bool has_target = false;
};

int cmd_predict(const PredictArgs& a, Record& r, std::ostream& out) {
  r.j["config"] = {{"checkpoint", a.checkpoint}, {"input", a.input}, {"variance_mode", a.mode},
                   {"has_target", a.has_target}};
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const FitArgs fa = from_meta(c.meta);
  const ModelConfig mc = model_config(fa);
  if (is_gplvm(mc.kind)) throw CapabilityError("GPLVM checkpoints have no input space to predict at");
  const Prepared p = prepare(fa, mc);
  if (p.ds.hash != c.dataset_hash) {
    throw DataError("training data for '" + fa.data.name + "' no longer matches the checkpoint fingerprint");
  }
  r.j["dataset"] = p.ds.name;
  r.j["dataset_hash"] = p.ds.hash;
  r.j["seed"] = fa.data.seed;

  CsvSchema schema;
  schema.has_target = a.has_target;
  const Dataset in = load_csv(a.input, schema);
  const Standardization& st = p.sp.train.standardization;
  if (in.X.cols() != p.sp.train.X.cols()) {
    throw InputError("input has " + std::to_string(in.X.cols()) + " feature columns, the model expects " +
                     std::to_string(p.sp.train.X.cols()));
  }
  const Matrix xs = (in.X.rowwise() - st.x_mean.transpose()).array().rowwise() / st.x_scale.transpose().array();
  const VarianceMode mode = variance_mode_from_string(a.mode);
  const auto t0 = Clock::now();
  Prediction pred = predict_model(mc, c.params, p.sp.train.X, p.sp.train.y, xs, mode);
  r.metric("wall_time", seconds_since(t0));
  const double noise = noise_variance_of(c.params);
  const bool regression = mc.lik.kind == LikelihoodKind::Gaussian;
  double shift = 0.0, scale = 1.0;
  if (regression) {
    shift = st.y_mean(0);
    scale = st.y_scale(0);
  }

  const std::string out_path =
      a.output.empty() ? (fs::path(results_dir()) / "predictions.csv").string() : a.output;
  fs::create_directories(fs::absolute(out_path).parent_path());
  std::ofstream f(out_path);
  if (!f) throw Error("cannot write '" + out_path + "'");
  for (Index l = 0; l < pred.mean.cols(); ++l) f << (l ? "," : "") << "mean" << l << ",var" << l;
  f << '\n' << std::setprecision(17);
  for (Index i = 0; i < pred.mean.rows(); ++i) {
    for (Index l = 0; l < pred.mean.cols(); ++l) {
      f << (l ? "," : "") << pred.mean(i, l) * scale + shift << ',' << pred.var(i, l) * scale * scale;
    }
    f << '\n';
  }
  r.j["artifacts"]["predictions"] = out_path;
  out << "wrote " << pred.mean.rows() << " predictions (" << a.mode << " variance) to " << out_path << '\n';

  if (a.has_target) {
    if (regression) {
      const RegressionMetrics m = regression_metrics(pred.mean.col(0), pred.var.col(0), noise, Vector(in.y.col(0)), shift, scale);
      r.metric("rmse", m.rmse);
      r.metric("log_likelihood", m.mean_log_lik);
      out << "rmse " << m.rmse << ", mean log-likelihood " << m.mean_log_lik << '\n';
    } else {
      const double ll = test_log_density(mc, pred, in.y, noise).mean();
      r.metric("log_likelihood", ll);
      out << "mean log-likelihood " << ll << '\n';
    }
  }
  return 0;
}

struct CompareArgs {
  DatasetSpec data;
  Index inducing = 10;
  int fit_iters = 0;
  double tol = 1e-7;
  std::string kernel = "se";
};

int cmd_compare(const CompareArgs& a, Record& r, std::ostream& out) {
  r.j["config"] = {{"dataset", a.data.name}, {"n", a.data.n}, {"dim", a.data.d}, {"seed", a.data.seed},
                   {"inducing", a.inducing}, {"fit_iters", a.fit_iters}, {"tol", a.tol}, {"kernel", a.kernel}};
  r.j["seed"] = a.data.seed;
  Dataset ds = resolve_dataset(a.data);
  r.j["dataset"] = ds.name;
  r.j["dataset_hash"] = ds.hash;
  standardize(ds.X);
  standardize(ds.y);
  ModelConfig mc;
  mc.kind = ModelKind::TSgpr;
  mc.family = kernel_family_from_string(a.kernel);
  mc.num_inducing = a.inducing;
  mc.seed = a.data.seed;
  Hyperparams h = default_hyperparams(ds.X, ds.y, mc);
  Matrix z = init_inducing(ds.X, a.inducing, a.data.seed);
  if (a.fit_iters > 0) {
    Model model = make_model(mc, ds.X, ds.y);
    TrainConfig tc;
    tc.objective_id = "t-sgpr";
    tc.optimizer = OptimizerKind::LBFGS;
    tc.iterations = a.fit_iters;
    const FitResult fr = fit(tc, *model.objective, model.init);
    h = read_hyperparams(fr.params, mc.family);
    z = fr.params.get(kInducing);
  }
  const BoundComparison bc = compare_bounds(h, z, ds.X, Vector(ds.y.col(0)), a.tol);
  out << "bound      value\n";
  for (const auto& [name, v] : bc.totals) {
    out << std::left << std::setw(10) << name << ' ' << std::setprecision(10) << v << '\n';
    r.metric(name, v);
  }
  out << (bc.ordered ? "ordering holds" : "ordering VIOLATED") << " (worst " << bc.worst_pair << ", gap "
      << bc.worst_violation << ")\n";
  r.metric("worst_violation", bc.worst_violation);
  r.j["ordered"] = bc.ordered;
  if (!bc.ordered) {
    r.j["error"] = "bound ordering violated at " + bc.worst_pair;
    return 1;
  }
  return 0;
}

struct ReproduceArgs {
  std::string experiment;
  int seeds = 1;
  int iters = 0;  // 0 keeps each experiment's default
  std::string out_dir;
};

int cmd_reproduce(const ReproduceArgs& a, Record& r, std::ostream& out) {
  r.j["config"] = {{"experiment", a.experiment}, {"seeds", a.seeds}, {"iters", a.iters}};
  const std::string dir = a.out_dir.empty() ? results_dir() : a.out_dir;
  fs::create_directories(dir);
  out << std::setprecision(5);

  if (a.experiment == "snelson") {
    SnelsonOptions o;
    if (a.iters > 0) o.iterations = a.iters;
    const Dataset ds = snelson();
    const SnelsonResult s = run_snelson(ds, o);
    r.j["dataset"] = ds.name;
    r.j["dataset_hash"] = ds.hash;
    r.j["canonical_data"] = s.canonical;
    const std::string curves = (fs::path(dir) / "snelson_curves.csv").string();
    write_series(curves, s.curves);
    r.j["artifacts"]["curves"] = curves;
    out << (s.canonical ? "canonical Snelson data\n" : "Snelson stand-in data (canonical file not supplied)\n");
    out << "method   objective   noise     kernel var  lengthscale\n";
    for (const SnelsonFit* f : {&s.sgpr, &s.tsgpr}) {
      out << std::left << std::setw(8) << f->method << ' ' << std::setw(11) << f->objective << ' ' << std::setw(9)
          << f->noise_variance << ' ' << std::setw(11) << f->kernel_variance << ' ' << f->lengthscale << '\n';
      r.metric(f->method + ".objective", f->objective);
      r.metric(f->method + ".noise_variance", f->noise_variance);
      r.metric(f->method + ".kernel_variance", f->kernel_variance);
      r.metric(f->method + ".wall_time", f->seconds);
    }
    r.j["tsgpr_ge_sgpr"] = s.tsgpr.objective >= s.sgpr.objective;
    return 0;
  }

  if (a.experiment == "table1") {
    Table1Options o;
    if (a.iters > 0) o.iterations = a.iters;
    out << "dataset      N/D        full rmse  full ll   full s    simp rmse  simp ll   simp s    speedup\n";
    for (const char* name : {"wine", "solar", "pumadyn32nm"}) {
      if (!dataset_available(name)) {
        out << std::left << std::setw(12) << name << " skipped (CSV not supplied)\n";
        r.j["skipped"].push_back(name);
        continue;
      }
      const Table1Row row = run_table1(load_named(name), o);
      out << std::left << std::setw(12) << name << ' ' << std::setw(10)
          << (std::to_string(row.n) + "/" + std::to_string(row.d)) << ' ' << std::setw(10) << row.full.rmse << ' '
          << std::setw(9) << row.full.mean_log_lik << ' ' << std::setw(9) << row.full.seconds << ' ' << std::setw(10)
          << row.simplified.rmse << ' ' << std::setw(9) << row.simplified.mean_log_lik << ' ' << std::setw(9)
          << row.simplified.seconds << ' ' << row.speedup << '\n';
      const std::string k = name;
      r.metric(k + ".full.rmse", row.full.rmse);
      r.metric(k + ".full.log_likelihood", row.full.mean_log_lik);
      r.metric(k + ".full.wall_time", row.full.seconds);
      r.metric(k + ".simplified.rmse", row.simplified.rmse);
      r.metric(k + ".simplified.log_likelihood", row.simplified.mean_log_lik);
      r.metric(k + ".simplified.wall_time", row.simplified.seconds);
      r.metric(k + ".speedup", row.speedup);
    }
    return 0;
  }

  if (a.experiment == "oilflow") {
    out << "seed  V-BGPLVM elbo  TV-BGPLVM elbo  (per point)\n";
    for (int s = 0; s < a.seeds; ++s) {
      OilflowOptions o;
      o.seed = static_cast<std::uint64_t>(s);
      if (a.iters > 0) o.iterations = a.iters;
      const OilflowResult res = run_oilflow(o);
      const double n = static_cast<double>(res.n);
      out << std::left << std::setw(5) << s << ' ' << std::setw(14) << res.v_elbo / n << ' ' << res.tv_elbo / n << '\n';
      const std::string k = "seed" + std::to_string(s);
      r.metric(k + ".v_elbo", res.v_elbo);
      r.metric(k + ".tv_elbo", res.tv_elbo);
      r.metric(k + ".wall_time", res.v_seconds + res.tv_seconds);
    }
    return 0;
  }

  if (a.experiment == "benchmark") {
    for (BenchmarkTask task : {BenchmarkTask::Regression, BenchmarkTask::Classification}) {
      const std::string tname = task == BenchmarkTask::Regression ? "regression" : "classification";
      out << tname << " test log-likelihood per point\nseed  svgp      t-svgp    solvegp   t-solvegp\n";
      for (int s = 0; s < a.seeds; ++s) {
        BenchmarkOptions o;
        o.task = task;
        o.n = task == BenchmarkTask::Regression ? 2000 : 500;
        o.seed = static_cast<std::uint64_t>(s);
        if (a.iters > 0) o.iterations = a.iters;
        BenchmarkResult res = run_benchmark(o);
        out << std::left << std::setw(5) << s;
        for (const char* m : {"svgp", "t-svgp", "solvegp", "t-solvegp"}) {
          out << ' ' << std::setw(9) << res.test_log_lik[m];
          r.metric(tname + ".seed" + std::to_string(s) + "." + m, res.test_log_lik[m]);
        }
        out << '\n';
      }
    }
    return 0;
  }
  throw InputError("unknown experiment '" + a.experiment + "'");
}

struct GradArgs {
  std::string objective = "t-sgpr";
  Index n = 10;
  Index m = 3;
  std::uint64_t seed = 0;
  double tol = 1e-4;
};

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names = model_names();
  for (const char* k : {"exact", "F1", "F3", "F4", "F5", "F9"}) names.emplace_back(k);
  return names;
}

int cmd_gradcheck(const GradArgs& a, Record& r, std::ostream& out) {
  r.j["config"] = {{"objective", a.objective}, {"n", a.n}, {"m", a.m}, {"seed", a.seed}, {"tol", a.tol}};
  r.j["seed"] = a.seed;
  if (a.n < 2 || a.m < 1) throw InputError("gradcheck needs n >= 2 and m >= 1");
  Matrix X(a.n, 2);
  Vector y(a.n);
  for (Index i = 0; i < a.n; ++i) {
    X(i, 0) = 4.0 * counter_uniform(hash_key(a.seed, 1, i, 0)) - 2.0;
    X(i, 1) = 4.0 * counter_uniform(hash_key(a.seed, 1, i, 1)) - 2.0;
    y(i) = std::sin(X(i, 0)) + 0.5 * std::cos(X(i, 1)) + 0.1 * counter_normal(a.seed, 2, i);
  }
  std::unique_ptr<Objective> obj;
  ParamVector params;
  const bool is_bound = a.objective == "exact" || a.objective.front() == 'F';
  if (is_bound) {
    const CollapsedKind kind = collapsed_kind_from_string(a.objective);
    ModelConfig mc;
    Hyperparams h = default_hyperparams(X, Matrix(y), mc);
    std::optional<Vector> m;
    if (kind == CollapsedKind::F3_GivenM) {
      m = Vector(a.n);
      for (Index i = 0; i < a.n; ++i) (*m)(i) = 0.2 + 0.8 * counter_uniform(hash_key(a.seed, 3, i));
    }
    params = pack_collapsed(kind, h, init_inducing(X, a.m, a.seed), m);
    obj = std::make_unique<CollapsedObjective>(kind, X, y, KernelFamily::SquaredExponential);
  } else {
    ModelConfig mc;
    mc.kind = model_kind_from_string(a.objective);
    mc.num_inducing = is_gplvm(mc.kind) || mc.kind == ModelKind::SolveGp || mc.kind == ModelKind::TSolveGp
                          ? std::max<Index>(a.m, 2)
                          : a.m;
    mc.seed = a.seed;
    mc.mc_samples = 2;
    Matrix data = Matrix(y);
    if (is_gplvm(mc.kind)) {
      data.resize(a.n, 3);
      data << y, X;
    }
    Model model = make_model(mc, X, data);
    obj = std::move(model.objective);
    params = model.init;
  }
  // Move away from the symmetric initialization so every gradient entry is exercised.
  Vector v = params.values();
  for (Index i = 0; i < v.size(); ++i) v(i) += 0.1 * counter_normal(a.seed, 4, i);
  params = params.with_values(v);

  const FdReport rep = fd_check(*obj, params);
  r.metric("max_rel_error", rep.max_rel_error);
  r.metric("parameters", static_cast<double>(params.size()));
  r.j["worst_parameter"] = rep.worst_param;
  out << a.objective << ": " << params.size() << " parameters, max relative error " << std::scientific
      << std::setprecision(3) << rep.max_rel_error << std::defaultfloat << " (worst: " << rep.worst_param << ")\n";
  if (!(rep.max_rel_error <= a.tol)) {
    r.j["error"] = "gradient check failed";
    return 1;
  }
  return 0;
}

}  // namespace

Dataset resolve_dataset(const DatasetSpec& spec) {
  if (spec.name == "synthetic-regression") return synthetic_regression(spec.n, spec.d, spec.seed);
  if (spec.name == "synthetic-classification") return synthetic_classification(spec.n, spec.classes, spec.seed);
  if (spec.name == "oilflow") return oilflow_surrogate(spec.n, spec.d < 3 ? 12 : spec.d, spec.seed);
  if (spec.name == "snelson") return snelson();
  if (manifest_entry(spec.name)) return load_named(spec.name);
  if (fs::exists(spec.name)) return load_csv(spec.name);
  throw DataError("unknown dataset '" + spec.name + "' (not in the manifest, not a generator, not a file)");
}

std::string results_dir() {
  if (const char* env = std::getenv("SPARSEGP_RESULTS_DIR"); env && *env) return env;
  return "results";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse variational Gaussian processes: bounds, training and experiments", "sparsegp"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Train a model and log test metrics");
  add_fit_options(fit_cmd, fit_args);

  PredictArgs pred_args;
  CLI::App* pred_cmd = app.add_subcommand("predict", "Predict from a checkpoint");
  pred_cmd->add_option("--checkpoint", pred_args.checkpoint, "Checkpoint written by fit")->required();
  pred_cmd->add_option("--input", pred_args.input, "CSV of inputs (with header)")->required();
  pred_cmd->add_option("--variance-mode", pred_args.mode, "full or simplified")
      ->check(CLI::IsMember({"full", "simplified"}))
      ->capture_default_str();
  pred_cmd->add_option("--output", pred_args.output, "Prediction CSV (default: results dir)");
  pred_cmd->add_flag("--has-target", pred_args.has_target, "Last input column is the target; report metrics");

  CompareArgs cmp_args;
  CLI::App* cmp_cmd = app.add_subcommand("compare-bounds", "Evaluate every collapsed bound at shared hyperparameters");
  cmp_cmd->add_option("--dataset", cmp_args.data.name, "Manifest name, generator or CSV path")->capture_default_str();
  cmp_cmd->add_option("--n", cmp_args.data.n, "Rows for generated datasets")->capture_default_str();
  cmp_cmd->add_option("--dim", cmp_args.data.d, "Input dimension for generated datasets")->capture_default_str();
  cmp_cmd->add_option("--seed", cmp_args.data.seed, "Seed")->capture_default_str();
  cmp_cmd->add_option("-M,--inducing", cmp_args.inducing, "Number of inducing points")->capture_default_str();
  cmp_cmd->add_option("--fit-iters", cmp_args.fit_iters, "L-BFGS iterations of T-SGPR before comparing")
      ->capture_default_str();
  cmp_cmd->add_option("--tol", cmp_args.tol, "Allowed ordering violation")->capture_default_str();
  cmp_cmd->add_option("--kernel", cmp_args.kernel, "se or matern32")
      ->check(CLI::IsMember({"se", "matern32"}))
      ->capture_default_str();

  ReproduceArgs rep_args;
  CLI::App* rep_cmd = app.add_subcommand("reproduce", "Run a named desk-scale experiment");
  rep_cmd->add_option("experiment", rep_args.experiment, "snelson, table1, oilflow or benchmark")
      ->required()
      ->check(CLI::IsMember({"snelson", "table1", "oilflow", "benchmark"}));
  rep_cmd->add_option("--seeds", rep_args.seeds, "Seeds for oilflow and benchmark")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rep_cmd->add_option("--iters", rep_args.iters, "Override the experiment's iteration count");
  rep_cmd->add_option("--out-dir", rep_args.out_dir, "Directory for data files (default: results dir)");

  GradArgs grad_args;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Compare gradients with central differences");
  grad_cmd->add_option("--objective", grad_args.objective, "Model or bound name")
      ->check(CLI::IsMember(gradcheck_names()))
      ->capture_default_str();
  grad_cmd->add_option("--n", grad_args.n, "Data points")->capture_default_str();
  grad_cmd->add_option("-M,--inducing", grad_args.m, "Inducing points")->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--tol", grad_args.tol, "Allowed relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  std::function<int(Record&)> handler;
  std::string name;
  if (fit_cmd->parsed()) {
    name = "fit";
    handler = [&](Record& r) { return cmd_fit(fit_args, r, out); };
  } else if (pred_cmd->parsed()) {
    name = "predict";
    handler = [&](Record& r) { return cmd_predict(pred_args, r, out); };
  } else if (cmp_cmd->parsed()) {
    name = "compare-bounds";
    handler = [&](Record& r) { return cmd_compare(cmp_args, r, out); };
  } else if (rep_cmd->parsed()) {
    name = "reproduce";
    handler = [&](Record& r) { return cmd_reproduce(rep_args, r, out); };
  } else {
    name = "gradcheck";
    handler = [&](Record& r) { return cmd_gradcheck(grad_args, r, out); };
  }

  Record rec(name);
  int code = 1;
  try {
    code = handler(rec);
  } catch (const std::exception& e) {
    rec.j["error"] = e.what();
    err << "error: " << e.what() << '\n';
    code = 1;
  }
  append_record(rec, err);
  return code;
}

}  // namespace sparsegp
