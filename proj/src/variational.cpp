#include "sparsegp/variational.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace sparsegp {

namespace {

Vector pack_lower(const Matrix& l) {
  const Index n = l.rows();
  Vector out(n * (n + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i, ++k) {
      if (i == j) {
        if (!(l(i, i) > 0.0)) throw InputError("covariance factor needs a positive diagonal");
        out(k) = std::log(l(i, i));
      } else {
        out(k) = l(i, j);
      }
    }
  }
  return out;
}

Matrix unpack_lower(const Vector& packed, Index n) {
  Matrix out = Matrix::Zero(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i, ++k) out(i, j) = (i == j) ? std::exp(packed(k)) : packed(k);
  }
  return out;
}

Index triangle_side(Index packed) {
  const Index n = static_cast<Index>(std::llround((std::sqrt(8.0 * packed + 1.0) - 1.0) / 2.0));
  if (n * (n + 1) / 2 != packed) throw InputError("packed factor has a non-triangular length");
  return n;
}

}  // namespace

Matrix select_rows(const Matrix& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw InputError("row index out of range");
    out.row(static_cast<Index>(i)) = a.row(rows[i]);
  }
  return out;
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

Matrix VariationalGaussian::covariance() const { return cov_factor * cov_factor.transpose(); }

VariationalGaussian VariationalGaussian::prior(const Matrix& kuu_chol) {
  return VariationalGaussian{Vector::Zero(kuu_chol.rows()), kuu_chol};
}

std::string to_string(ScalingMode mode) {
  switch (mode) {
    case ScalingMode::Identity:
      return "identity";
    case ScalingMode::PerPoint:
      return "per_point";
    case ScalingMode::BetaShared:
      return "beta_shared";
    case ScalingMode::ScalarShared:
      return "scalar_shared";
  }
  return "unknown";
}

ScalingMode scaling_mode_from_string(const std::string& name) {
  if (name == "identity") return ScalingMode::Identity;
  if (name == "per_point") return ScalingMode::PerPoint;
  if (name == "beta_shared") return ScalingMode::BetaShared;
  if (name == "scalar_shared") return ScalingMode::ScalarShared;
  throw InputError("unknown scaling mode '" + name + "'");
}

ConditionalScaling ConditionalScaling::identity() { return {}; }

ConditionalScaling ConditionalScaling::per_point(const Vector& m) {
  if ((m.array() <= 0.0).any()) throw InputError("per-point scaling needs positive m");
  ConditionalScaling s;
  s.mode = ScalingMode::PerPoint;
  s.log_m = m.array().log().matrix();
  return s;
}

ConditionalScaling ConditionalScaling::beta_shared(double beta) {
  if (!(beta > 0.0)) throw InputError("beta must be positive");
  ConditionalScaling s;
  s.mode = ScalingMode::BetaShared;
  s.log_beta = std::log(beta);
  return s;
}

ConditionalScaling ConditionalScaling::scalar_shared(double m) {
  if (!(m > 0.0)) throw InputError("shared m must be positive");
  ConditionalScaling s;
  s.mode = ScalingMode::ScalarShared;
  s.log_m_shared = std::log(m);
  return s;
}

Vector realize_m(const ConditionalScaling& scaling, const Vector& d) {
  switch (scaling.mode) {
    case ScalingMode::Identity:
      return Vector::Ones(d.size());
    case ScalingMode::PerPoint:
      if (scaling.log_m.size() != d.size()) throw InputError("realize_m: per-point length mismatch");
      return scaling.log_m.array().exp().matrix();
    case ScalingMode::BetaShared: {
      const double beta = std::exp(scaling.log_beta);
      return (beta / (d.array() + beta)).matrix();
    }
    case ScalingMode::ScalarShared:
      return Vector::Constant(d.size(), std::exp(scaling.log_m_shared));
  }
  return Vector();
}

double conditional_kl(const Vector& m) {
  if ((m.array() <= 0.0).any() || !m.allFinite()) {
    throw InputError("conditional_kl: m must be positive");
  }
  return 0.5 * (1.0 + m.array().log() - m.array()).sum();
}

double kl_qu(const VariationalGaussian& qu, const Matrix& kuu_chol) {
  if (qu.dim() != kuu_chol.rows() || qu.cov_factor.rows() != qu.dim()) {
    throw InputError("kl_qu: dimension mismatch");
  }
  const auto l = kuu_chol.triangularView<Eigen::Lower>();
  const Matrix b = l.solve(qu.cov_factor);
  const Vector a = l.solve(qu.mean);
  return 0.5 * (b.squaredNorm() + a.squaredNorm() - static_cast<double>(qu.dim())) +
         kuu_chol.diagonal().array().log().sum() - qu.cov_factor.diagonal().array().log().sum();
}

SvgpState init_svgp(const Hyperparams& hyper, const Matrix& Z, const Likelihood& lik,
                    ScalingMode mode, Index num_data) {
  if (Z.rows() < 1) throw InputError("SVGP needs at least one inducing point");
  SvgpState s;
  s.hyper = hyper;
  s.Z = Z;
  s.lik = lik;
  const Matrix kuu = kernel_eval(hyper.kernel, Z, Z);
  const Matrix chol = cholesky_jitter(kuu, scaled_ladder(kuu)).lower;
  s.qu.assign(static_cast<std::size_t>(lik.latent_dim()), VariationalGaussian::prior(chol));
  switch (mode) {
    case ScalingMode::Identity:
      break;
    case ScalingMode::PerPoint:
      if (num_data < 1) throw InputError("per-point scaling needs the data count");
      s.scaling = ConditionalScaling::per_point(Vector::Ones(num_data));
      break;
    case ScalingMode::BetaShared:
      s.scaling = ConditionalScaling::beta_shared(
          lik.kind == LikelihoodKind::Gaussian ? hyper.noise_variance() : 1.0);
      break;
    case ScalingMode::ScalarShared:
      s.scaling = ConditionalScaling::scalar_shared(1.0);
      break;
  }
  return s;
}

void add_q(ParamVector& p, const std::string& prefix, const std::vector<VariationalGaussian>& q) {
  if (q.empty()) throw InputError("add_q: no factors");
  const Index m = q.front().dim();
  Matrix means(m, static_cast<Index>(q.size()));
  Matrix chols(m * (m + 1) / 2, static_cast<Index>(q.size()));
  for (std::size_t l = 0; l < q.size(); ++l) {
    if (q[l].dim() != m) throw InputError("add_q: factors differ in size");
    means.col(static_cast<Index>(l)) = q[l].mean;
    chols.col(static_cast<Index>(l)) = pack_lower(q[l].cov_factor);
  }
  p.add(prefix + ".mean", means);
  p.add(prefix + ".chol", chols);
}

std::vector<VariationalGaussian> read_q(const ParamVector& p, const std::string& prefix) {
  const Matrix means = p.get(prefix + ".mean");
  const Matrix chols = p.get(prefix + ".chol");
  const Index m = triangle_side(chols.rows());
  std::vector<VariationalGaussian> out;
  for (Index l = 0; l < means.cols(); ++l) {
    out.push_back({means.col(l), unpack_lower(chols.col(l), m)});
  }
  return out;
}

void add_scaling(ParamVector& p, const ConditionalScaling& s) {
  switch (s.mode) {
    case ScalingMode::Identity:
      break;
    case ScalingMode::PerPoint:
      p.add(kLogM, s.log_m);
      break;
    case ScalingMode::BetaShared:
      p.add(kLogBeta, Matrix::Constant(1, 1, s.log_beta));
      break;
    case ScalingMode::ScalarShared:
      p.add(kLogM, Matrix::Constant(1, 1, s.log_m_shared));
      break;
  }
}

ConditionalScaling read_scaling(const ParamVector& p, ScalingMode mode) {
  ConditionalScaling s;
  s.mode = mode;
  if (mode == ScalingMode::PerPoint) s.log_m = p.get(kLogM).col(0);
  if (mode == ScalingMode::BetaShared) s.log_beta = p.scalar(kLogBeta);
  if (mode == ScalingMode::ScalarShared) s.log_m_shared = p.scalar(kLogM);
  return s;
}

ParamVector pack_svgp(const SvgpState& state) {
  ParamVector p;
  add_hyperparams(p, state.hyper, state.lik.kind == LikelihoodKind::Gaussian);
  p.add(kInducing, state.Z);
  add_q(p, "qu", state.qu);
  add_scaling(p, state.scaling);
  return p;
}

SvgpState unpack_svgp(const ParamVector& p, const SvgpState& like) {
  SvgpState s = like;
  const double noise = like.hyper.log_noise_variance;
  s.hyper = read_hyperparams(p, like.hyper.kernel.family);
  if (!p.has(kLogNoise)) s.hyper.log_noise_variance = noise;
  s.Z = p.get(kInducing);
  s.qu = read_q(p, "qu");
  s.scaling = read_scaling(p, like.scaling.mode);
  return s;
}

SvgpObjective::SvgpObjective(Matrix X, Matrix y, Likelihood lik, KernelFamily family,
                             ScalingMode mode)
    : X_(std::move(X)), y_(std::move(y)), lik_(lik), family_(family), mode_(mode) {
  if (X_.rows() != y_.rows()) throw InputError("SVGP: X and y row counts differ");
}

std::string SvgpObjective::id() const {
  return mode_ == ScalingMode::Identity ? "svgp" : "t-svgp";
}

ad::Var SvgpObjective::build(ad::Tape& tape, const Bindings& b, const EvalContext& ctx,
                             TermMap* terms) const {
  const std::vector<Index> every = ctx.batch.empty() ? all_rows(X_.rows()) : std::vector<Index>{};
  const std::span<const Index> rows = ctx.batch.empty() ? std::span<const Index>(every) : ctx.batch;
  if (rows.empty()) throw InputError("SVGP: empty batch");
  const double n_total = static_cast<double>(n_total_ > 0 ? n_total_ : X_.rows());
  const double scale = n_total / static_cast<double>(rows.size());

  const ad::KernelVars kv = ad::kernel_vars(b, family_);
  ad::Var Z = b.at(kInducing);
  ad::Var xb = tape.constant(select_rows(X_, rows));
  const ad::InducingConditional ic = ad::inducing_conditional(kv, Z, xb);
  const std::vector<ad::QVars> qs = ad::q_vars(b, "qu", Z.rows());
  if (static_cast<Index>(qs.size()) != lik_.latent_dim()) {
    throw InputError("SVGP: q(u) count does not match the likelihood's latent dimension");
  }
  const ad::ScaledM sm = ad::realize_m(mode_, b, ic.d, rows);
  ad::Var md = ad::cwise_product(sm.m, ic.d);

  std::vector<ad::Var> means, vars;
  ad::Var kl;
  for (const auto& q : qs) {
    const ad::QComponent c = ad::q_component(ic.kuu_chol, ic.proj, q.mean, q.chol);
    means.push_back(c.mean);
    vars.push_back(md + c.s_var);
    kl = kl.valid() ? kl + c.kl : c.kl;
  }
  ad::Var mean = means.size() == 1 ? means[0] : ad::hstack(means);
  ad::Var var = vars.size() == 1 ? vars[0] : ad::hstack(vars);

  ad::Var kl_u = -kl;
  ad::Var ell = ad::expected_loglik_sum(lik_, b, mean, var, select_rows(y_, rows), rows, ctx.step) * scale;
  ad::Var total = kl_u + ell;
  if (terms) {
    (*terms)["kl_u"] = kl_u;
    (*terms)["ell"] = ell;
  }
  if (!sm.identity) {
    ad::Var ck = ad::conditional_kl(sm) * (scale * static_cast<double>(qs.size()));
    total = total + ck;
    if (terms) (*terms)["kl_conditional"] = ck;
  }
  return total;
}

BoundValue elbo(const SvgpState& state, const Matrix& X, const Matrix& y) {
  SvgpObjective obj(X, y, state.lik, state.hyper.kernel.family, state.scaling.mode);
  ParamVector p = pack_svgp(state);
  if (!p.has(kLogNoise)) p.add(kLogNoise, Matrix::Constant(1, 1, state.hyper.log_noise_variance));
  return evaluate(obj, p);
}

BoundValue minibatch_elbo(const SvgpState& state, const Matrix& X, const Matrix& y,
                          std::span<const Index> batch, Index n_total) {
  if (batch.empty()) throw InputError("minibatch_elbo: empty batch");
  SvgpObjective obj(X, y, state.lik, state.hyper.kernel.family, state.scaling.mode);
  obj.set_total(n_total);
  ParamVector p = pack_svgp(state);
  if (!p.has(kLogNoise)) p.add(kLogNoise, Matrix::Constant(1, 1, state.hyper.log_noise_variance));
  EvalContext ctx;
  ctx.batch = batch;
  return evaluate(obj, p, ctx);
}

namespace ad {

QComponent q_marginals(Var prior_chol, Var proj, Var mean, Var chol) {
  QComponent out;
  out.mean = matmul(transpose(proj), solve_lower(prior_chol, mean));
  Var w = solve_lower_transposed(prior_chol, proj);
  out.s_var = transpose(col_sums(square(matmul(transpose(chol), w))));
  return out;
}

Var q_kl(Var prior_chol, Var mean, Var chol) {
  const double m = static_cast<double>(prior_chol.rows());
  Var a = solve_lower(prior_chol, mean);
  Var bmat = solve_lower(prior_chol, chol);
  return 0.5 * (sum(square(bmat)) + sum(square(a)) - m) + sum_log_diagonal(prior_chol) -
         sum_log_diagonal(chol);
}

QComponent q_component(Var prior_chol, Var proj, Var mean, Var chol) {
  QComponent out = q_marginals(prior_chol, proj, mean, chol);
  out.kl = q_kl(prior_chol, mean, chol);
  return out;
}

std::vector<QVars> q_vars(const Bindings& b, const std::string& prefix, Index m) {
  Var means = b.at(prefix + ".mean");
  Var chols = b.at(prefix + ".chol");
  if (means.rows() != m || chols.rows() != m * (m + 1) / 2 || means.cols() != chols.cols()) {
    throw InputError("q blocks '" + prefix + "' do not match the inducing count");
  }
  std::vector<QVars> out;
  for (Index l = 0; l < means.cols(); ++l) {
    out.push_back({block(means, 0, l, m, 1), lower_from_packed(block(chols, 0, l, chols.rows(), 1), m)});
  }
  return out;
}

ScaledM realize_m(ScalingMode mode, const Bindings& b, Var d, std::span<const Index> rows) {
  Tape& t = d.tape();
  const Index n = d.rows();
  ScaledM out;
  switch (mode) {
    case ScalingMode::Identity:
      out.m = t.constant(Matrix::Ones(n, 1));
      out.log_m = t.constant(Matrix::Zero(n, 1));
      out.identity = true;
      break;
    case ScalingMode::PerPoint:
      out.log_m = gather_rows(b.at(kLogM), rows);
      out.m = exp(out.log_m);
      break;
    case ScalingMode::BetaShared: {
      Var lb = b.at(kLogBeta);
      Var db = d + exp(lb);
      out.m = cwise_quotient(exp(lb) + t.constant(Matrix::Zero(n, 1)), db);
      out.log_m = lb - log(db);
      break;
    }
    case ScalingMode::ScalarShared: {
      out.log_m = b.at(kLogM) + t.constant(Matrix::Zero(n, 1));
      out.m = exp(out.log_m);
      break;
    }
  }
  return out;
}

Var conditional_kl(const ScaledM& m) {
  if (m.identity) return m.m.tape().constant(0.0);
  return 0.5 * sum((m.log_m + 1.0) - m.m);
}

Var expected_loglik_sum(const Likelihood& lik, const Bindings& b, Var mean, Var var,
                        const Matrix& y, std::span<const Index> keys, std::uint64_t step) {
  switch (lik.kind) {
    case LikelihoodKind::Gaussian:
      if (y.cols() != mean.cols()) throw InputError("Gaussian likelihood: output count mismatch");
      return sum(gaussian_expected_loglik(mean, var, y, b.at(kLogNoise)));
    case LikelihoodKind::Bernoulli:
      return sum(bernoulli_expected_loglik(mean, var, y.col(0), lik.quadrature_order));
    case LikelihoodKind::Categorical: {
      std::vector<int> labels(static_cast<std::size_t>(y.rows()));
      for (Index i = 0; i < y.rows(); ++i) labels[i] = static_cast<int>(std::lround(y(i, 0)));
      std::vector<Index> point_keys(keys.begin(), keys.end());
      return sum(categorical_expected_loglik(mean, var, labels, point_keys, lik.mc_samples,
                                             lik.seed ^ (step * 0x9e3779b97f4a7c15ULL)));
    }
  }
  throw InputError("unknown likelihood");
}

}  // namespace ad

Matrix init_inducing(const Matrix& X, Index m, std::uint64_t seed) {
  if (m < 1) throw InputError("need at least one inducing point");
  if (X.rows() < 1) throw InputError("cannot place inducing points without data");
  // Farthest-point selection from a seeded start. A plain random subset can land two
  // inputs almost on top of each other, and K_uu then has condition numbers near 1e14.
  std::mt19937_64 rng(hash_key(seed, 0x1d));
  const Index n = X.rows();
  Index next = static_cast<Index>(std::uniform_int_distribution<std::uint64_t>(0, static_cast<std::uint64_t>(n - 1))(rng));
  Vector gap = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Matrix z(m, X.cols());
  for (Index i = 0; i < m; ++i) {
    z.row(i) = X.row(next);
    gap = gap.cwiseMin((X.rowwise() - X.row(next)).rowwise().squaredNorm());
    Index best = 0;
    // All rows already covered means duplicates are unavoidable; cycle through the data.
    if (gap.maxCoeff(&best) <= 0.0) best = (next + 1) % n;
    next = best;
  }
  return z;
}

}  // namespace sparsegp
