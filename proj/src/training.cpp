#include "sparsegp/training.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace sparsegp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Index> draw_batch(Index n, Index size, std::uint64_t seed, std::uint64_t step) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(hash_key(seed, step));
  for (Index i = 0; i < size; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(size));
  return idx;
}

std::string describe(const Error& e) {
  std::string msg = e.what();
  if (const auto* ne = dynamic_cast<const NumericalError*>(&e); ne && !ne->parameter().empty()) {
    msg += " (parameter " + ne->parameter() + ")";
  }
  return msg;
}

// Value only, with failures mapped to -inf so line searches can back off.
double safe_value(const Objective& obj, const ParamVector& p, const EvalContext& ctx) {
  try {
    ad::Tape tape;
    Bindings b = bind(tape, p, true);
    const double v = obj.build(tape, b, ctx, nullptr).scalar();
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const NotPositiveDefinite&) {
  } catch (const NumericalError&) {
  }
  return -std::numeric_limits<double>::infinity();
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "lbfgs"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "lbfgs" || name == "l-bfgs") return OptimizerKind::LBFGS;
  throw InputError("unknown optimizer '" + name + "'");
}

ValueAndGradient value_and_gradient(const Objective& obj, const ParamVector& params,
                                    const EvalContext& ctx) {
  if (!obj.differentiable()) throw CapabilityError("objective '" + obj.id() + "' has no gradient");
  ad::Tape tape;
  Bindings b = bind(tape, params);
  ad::Var out = obj.build(tape, b, ctx, nullptr);
  ValueAndGradient vg;
  vg.value = out.scalar();
  if (!std::isfinite(vg.value)) {
    // Blame the block holding the largest magnitude entry.
    Index worst = 0;
    if (params.size() > 0) params.values().cwiseAbs().maxCoeff(&worst);
    throw NumericalError("objective '" + obj.id() + "' is not finite",
                         params.size() > 0 ? params.name_at(worst) : std::string("objective"));
  }
  tape.backward(out);
  vg.gradient.resize(params.size());
  for (const auto& blk : params.manifest()) {
    vg.gradient.segment(blk.offset, blk.size()) = tape.gradient(b.at(blk.name)).reshaped();
  }
  for (Index i = 0; i < vg.gradient.size(); ++i) {
    if (!std::isfinite(vg.gradient(i))) {
      throw NumericalError("gradient of '" + obj.id() + "' is not finite", params.name_at(i));
    }
  }
  return vg;
}

Vector gradient(const Objective& obj, const ParamVector& params, const EvalContext& ctx) {
  return value_and_gradient(obj, params, ctx).gradient;
}

FdReport fd_check(const Objective& obj, const ParamVector& params, const EvalContext& ctx,
                  double rel_step, double floor) {
  FdReport r;
  r.analytic = gradient(obj, params, ctx);
  r.numeric.resize(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(params.values()(i)));
    Vector plus = params.values(), minus = params.values();
    plus(i) += h;
    minus(i) -= h;
    const double fp = evaluate(obj, params.with_values(plus), ctx).total;
    const double fm = evaluate(obj, params.with_values(minus), ctx).total;
    r.numeric(i) = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(r.analytic(i)), std::abs(r.numeric(i)), floor});
    const double err = std::abs(r.analytic(i) - r.numeric(i)) / denom;
    if (r.worst_index < 0 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.worst_param = params.name_at(i);
    }
  }
  return r;
}

FitResult fit(const TrainConfig& config, const Objective& obj, const ParamVector& init) {
  if (config.iterations < 1) throw InputError("fit: iterations must be at least 1");
  if (config.optimizer == OptimizerKind::Adam && !(config.adam.lr > 0.0)) {
    throw InputError("fit: learning rate must be positive");
  }
  if (config.optimizer == OptimizerKind::LBFGS && config.batch_size > 0) {
    throw InputError("fit: L-BFGS needs full-batch objectives");
  }
  const Index n = obj.num_data();
  if (config.batch_size > n) throw InputError("fit: batch size exceeds the data count");
  const int every = std::max(1, config.trace_every);

  FitResult res;
  res.params = init;
  const auto t0 = Clock::now();
  auto record = [&](int it, double f) { res.trace.push_back({it, f, seconds_since(t0)}); };
  auto finish_with_checkpoint = [&]() {
    if (config.checkpoint_path.empty()) return;
    Checkpoint c;
    c.objective_id = obj.id();
    c.params = res.params;
    const std::size_t keep = std::min<std::size_t>(res.trace.size(), 20);
    c.trace_tail.assign(res.trace.end() - static_cast<std::ptrdiff_t>(keep), res.trace.end());
    save_checkpoint(config.checkpoint_path, c);
  };

  if (config.optimizer == OptimizerKind::Adam) {
    Vector m1 = Vector::Zero(init.size()), m2 = Vector::Zero(init.size());
    Vector theta = init.values();
    double b1t = 1.0, b2t = 1.0;
    for (int it = 0; it < config.iterations; ++it) {
      std::vector<Index> batch;
      if (config.batch_size > 0) batch = draw_batch(n, config.batch_size, config.seed, static_cast<std::uint64_t>(it));
      EvalContext ctx{batch, static_cast<std::uint64_t>(it)};
      ValueAndGradient vg;
      try {
        vg = value_and_gradient(obj, res.params.with_values(theta), ctx);
      } catch (const Error& e) {
        res.diverged = true;
        res.message = std::string("stopped at iteration ") + std::to_string(it) + ": " + describe(e);
        break;
      }
      res.params = res.params.with_values(theta);
      res.final_objective = vg.value;
      res.iterations_run = it + 1;
      if (it % every == 0) record(it, vg.value);
      b1t *= config.adam.beta1;
      b2t *= config.adam.beta2;
      m1 = config.adam.beta1 * m1 + (1.0 - config.adam.beta1) * vg.gradient;
      m2 = config.adam.beta2 * m2 + (1.0 - config.adam.beta2) * vg.gradient.cwiseAbs2();
      const Vector mhat = m1 / (1.0 - b1t);
      const Vector vhat = m2 / (1.0 - b2t);
      theta += (config.adam.lr * mhat.array() / (vhat.array().sqrt() + config.adam.eps)).matrix();
    }
    if (!res.diverged) {
      // Report the objective at the returned parameters.
      std::vector<Index> batch;
      if (config.batch_size > 0) batch = draw_batch(n, config.batch_size, config.seed, config.iterations);
      const double f = safe_value(obj, res.params.with_values(theta), {batch, static_cast<std::uint64_t>(config.iterations)});
      if (std::isfinite(f)) {
        res.params = res.params.with_values(theta);
        res.final_objective = f;
        record(config.iterations, f);
      }
    }
    finish_with_checkpoint();
    return res;
  }

  // L-BFGS on phi = -objective.
  const LbfgsConfig& lc = config.lbfgs;
  EvalContext ctx{};
  ValueAndGradient vg = value_and_gradient(obj, init, ctx);
  Vector x = init.values();
  double phi = -vg.value;
  Vector g = -vg.gradient;
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  res.final_objective = vg.value;
  record(0, vg.value);
  for (int it = 1; it <= config.iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() < lc.grad_tol) {
      res.message = "gradient tolerance reached";
      break;
    }
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - beta);
    }
    Vector dir = -q;
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.cwiseAbs().sum())) : 1.0;
    bool accepted = false;
    Vector x_new;
    double phi_new = 0.0;
    for (int bt = 0; bt < lc.max_backtracks; ++bt, t *= 0.5) {
      x_new = x + t * dir;
      phi_new = -safe_value(obj, init.with_values(x_new), ctx);
      if (std::isfinite(phi_new) && phi_new <= phi + lc.armijo_c1 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.message = "line search made no progress";
      break;
    }
    ValueAndGradient nv;
    try {
      nv = value_and_gradient(obj, init.with_values(x_new), ctx);
    } catch (const Error& e) {
      res.diverged = true;
      res.message = std::string("gradient failed: ") + describe(e);
      break;
    }
    const Vector g_new = -nv.gradient;
    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > lc.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double change = std::abs(phi - phi_new);
    x = x_new;
    phi = phi_new;
    g = g_new;
    res.params = init.with_values(x);
    res.final_objective = -phi;
    res.iterations_run = it;
    if (it % every == 0) record(it, -phi);
    if (change <= lc.rel_tol * std::max(1.0, std::abs(phi))) {
      res.message = "objective converged";
      break;
    }
  }
  if (res.trace.empty() || res.trace.back().iteration != res.iterations_run) record(res.iterations_run, res.final_objective);
  finish_with_checkpoint();
  return res;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["schema_version"] = ckpt.schema_version;
  j["objective"] = ckpt.objective_id;
  j["scaling_mode"] = ckpt.scaling_mode;
  j["dataset_hash"] = ckpt.dataset_hash;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& b : ckpt.params.manifest()) {
    manifest.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  j["manifest"] = manifest;
  j["values"] = std::vector<double>(ckpt.params.values().data(),
                                    ckpt.params.values().data() + ckpt.params.size());
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : ckpt.trace_tail) {
    trace.push_back({{"iteration", t.iteration}, {"objective", t.objective}, {"wall_seconds", t.wall_seconds}});
  }
  j["trace_tail"] = trace;
  j["meta"] = ckpt.meta;

  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint '" + tmp.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw Error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  Checkpoint c;
  c.schema_version = j.at("schema_version").get<int>();
  if (c.schema_version != kCheckpointSchema) {
    throw InputError("checkpoint schema " + std::to_string(c.schema_version) + " is not supported");
  }
  c.objective_id = j.at("objective").get<std::string>();
  c.scaling_mode = j.value("scaling_mode", "");
  c.dataset_hash = j.value("dataset_hash", "");
  const std::vector<double> values = j.at("values").get<std::vector<double>>();
  Index offset = 0;
  for (const auto& b : j.at("manifest")) {
    const Index rows = b.at("rows").get<Index>();
    const Index cols = b.at("cols").get<Index>();
    if (offset + rows * cols > static_cast<Index>(values.size())) {
      throw InputError("checkpoint manifest does not match its values");
    }
    Matrix m = Eigen::Map<const Vector>(values.data() + offset, rows * cols).reshaped(rows, cols);
    c.params.add(b.at("name").get<std::string>(), m);
    offset += rows * cols;
  }
  if (offset != static_cast<Index>(values.size())) throw InputError("checkpoint has extra values");
  for (const auto& t : j.value("trace_tail", nlohmann::json::array())) {
    c.trace_tail.push_back({t.at("iteration").get<int>(), t.at("objective").get<double>(),
                            t.at("wall_seconds").get<double>()});
  }
  if (j.contains("meta")) c.meta = j.at("meta").get<std::map<std::string, std::string>>();
  return c;
}

}  // namespace sparsegp
