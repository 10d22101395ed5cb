#include "sparsegp/solvegp.hpp"

#include "sparsegp/errors.hpp"

namespace sparsegp {

OrthCov build_orth_cov(const Hyperparams& h, const Matrix& Zu, const Matrix& Zv, const Matrix& X) {
  if (Zu.rows() < 1 || Zv.rows() < 1) throw InputError("SOLVE-GP needs both inducing sets non-empty");
  OrthCov oc;
  const Matrix kuu = kernel_eval(h.kernel, Zu, Zu);
  oc.kuu_chol = cholesky_jitter(kuu, scaled_ladder(kuu)).lower;
  oc.kvu = kernel_eval(h.kernel, Zv, Zu);
  const Matrix kvv = kernel_eval(h.kernel, Zv, Zv);
  const auto lu = oc.kuu_chol.triangularView<Eigen::Lower>();
  const Matrix auv = lu.solve(oc.kvu.transpose());
  Matrix cvv = kvv - auv.transpose() * auv;
  cvv = 0.5 * (cvv + cvv.transpose());
  oc.cvv_chol = cholesky_jitter(cvv, scaled_ladder(kvv)).lower;
  oc.kfu = kernel_eval(h.kernel, X, Zu);
  oc.kfv = kernel_eval(h.kernel, X, Zv);
  oc.kff_diag = kernel_diag(h.kernel, X);
  const Matrix au = lu.solve(oc.kfu.transpose());
  const Matrix cvf = oc.kfv.transpose() - auv.transpose() * au;
  const Matrix ac = oc.cvv_chol.triangularView<Eigen::Lower>().solve(cvf);
  oc.d = checked_conditional_variance(
      oc.kff_diag, oc.kff_diag - au.colwise().squaredNorm().transpose() - ac.colwise().squaredNorm().transpose());
  return oc;
}

OrthState init_solvegp(const Hyperparams& hyper, const Matrix& Zu, const Matrix& Zv,
                       const Likelihood& lik, ScalingMode mode, Index num_data) {
  const SvgpState base = init_svgp(hyper, Zu, lik, mode, num_data);
  OrthState s;
  s.hyper = hyper;
  s.Zu = Zu;
  s.Zv = Zv;
  s.lik = lik;
  s.scaling = base.scaling;
  s.qu = base.qu;
  const OrthCov oc = build_orth_cov(hyper, Zu, Zv, Matrix(0, Zu.cols()));
  s.qv.assign(s.qu.size(), VariationalGaussian::prior(oc.cvv_chol));
  return s;
}

std::pair<double, double> orth_training_marginal(const OrthState& state, const OrthCov& oc,
                                                 Index n, Index latent) {
  if (n < 0 || n >= oc.kfu.rows()) throw InputError("orth_training_marginal: index out of range");
  if (latent < 0 || latent >= static_cast<Index>(state.qu.size())) {
    throw InputError("orth_training_marginal: latent out of range");
  }
  const VariationalGaussian& qu = state.qu[latent];
  const VariationalGaussian& qv = state.qv[latent];
  const auto lu = oc.kuu_chol.triangularView<Eigen::Lower>();
  const auto lc = oc.cvv_chol.triangularView<Eigen::Lower>();
  const Vector au = lu.solve(Vector(oc.kfu.row(n).transpose()));
  const Matrix auv = lu.solve(oc.kvu.transpose());
  const Vector cv = oc.kfv.row(n).transpose() - auv.transpose() * au;
  const Vector ac = lc.solve(cv);

  const Vector ku_inv_mu = lu.transpose().solve(lu.solve(qu.mean));
  const Vector cv_inv_mv = lc.transpose().solve(lc.solve(qv.mean));
  const double mean = oc.kfu.row(n).dot(ku_inv_mu) + cv.dot(cv_inv_mv);

  const double m_n = realize_m(state.scaling, oc.d)(n);
  const Vector tu = qu.cov_factor.transpose() * lu.transpose().solve(au);
  const Vector tv = qv.cov_factor.transpose() * lc.transpose().solve(ac);
  return {mean, m_n * oc.d(n) + tu.squaredNorm() + tv.squaredNorm()};
}

ParamVector pack_solvegp(const OrthState& state) {
  ParamVector p;
  add_hyperparams(p, state.hyper, state.lik.kind == LikelihoodKind::Gaussian);
  p.add(kInducing, state.Zu);
  p.add(kInducingV, state.Zv);
  add_q(p, "qu", state.qu);
  add_q(p, "qv", state.qv);
  add_scaling(p, state.scaling);
  return p;
}

OrthState unpack_solvegp(const ParamVector& p, const OrthState& like) {
  OrthState s = like;
  s.hyper = read_hyperparams(p, like.hyper.kernel.family);
  if (!p.has(kLogNoise)) s.hyper.log_noise_variance = like.hyper.log_noise_variance;
  s.Zu = p.get(kInducing);
  s.Zv = p.get(kInducingV);
  s.qu = read_q(p, "qu");
  s.qv = read_q(p, "qv");
  s.scaling = read_scaling(p, like.scaling.mode);
  return s;
}

SolveGpObjective::SolveGpObjective(Matrix X, Matrix y, Likelihood lik, KernelFamily family,
                                   ScalingMode mode)
    : X_(std::move(X)), y_(std::move(y)), lik_(lik), family_(family), mode_(mode) {
  if (X_.rows() != y_.rows()) throw InputError("SOLVE-GP: X and y row counts differ");
}

std::string SolveGpObjective::id() const {
  return mode_ == ScalingMode::Identity ? "solvegp" : "t-solvegp";
}

ad::Var SolveGpObjective::build(ad::Tape& tape, const Bindings& b, const EvalContext& ctx,
                                TermMap* terms) const {
  const std::vector<Index> every = ctx.batch.empty() ? all_rows(X_.rows()) : std::vector<Index>{};
  const std::span<const Index> rows = ctx.batch.empty() ? std::span<const Index>(every) : ctx.batch;
  if (rows.empty()) throw InputError("SOLVE-GP: empty batch");
  const double scale = static_cast<double>(X_.rows()) / static_cast<double>(rows.size());

  const ad::KernelVars kv = ad::kernel_vars(b, family_);
  ad::Var zu = b.at(kInducing);
  ad::Var zv = b.at(kInducingV);
  const auto qu = ad::q_vars(b, "qu", zu.rows());
  const auto qv = ad::q_vars(b, "qv", zv.rows());
  if (static_cast<Index>(qu.size()) != lik_.latent_dim() || qu.size() != qv.size()) {
    throw InputError("SOLVE-GP: factor count does not match the likelihood");
  }
  const ad::OrthMarginals om = ad::orth_marginals(kv, zu, zv, tape.constant(select_rows(X_, rows)), qu, qv);
  const ad::ScaledM sm = ad::realize_m(mode_, b, om.d, rows);
  ad::Var md = ad::cwise_product(sm.m, om.d);
  std::vector<ad::Var> vars;
  for (const auto& s : om.s_vars) vars.push_back(md + s);
  ad::Var mean = om.means.size() == 1 ? om.means[0] : ad::hstack(om.means);
  ad::Var var = vars.size() == 1 ? vars[0] : ad::hstack(vars);

  ad::Var kl_u = -om.kl_u;
  ad::Var kl_v = -om.kl_v;
  ad::Var ell = ad::expected_loglik_sum(lik_, b, mean, var, select_rows(y_, rows), rows, ctx.step) * scale;
  ad::Var total = kl_u + kl_v + ell;
  if (terms) {
    (*terms)["kl_u"] = kl_u;
    (*terms)["kl_v"] = kl_v;
    (*terms)["ell"] = ell;
  }
  if (!sm.identity) {
    ad::Var ck = ad::conditional_kl(sm) * (scale * static_cast<double>(qu.size()));
    total = total + ck;
    if (terms) (*terms)["kl_conditional"] = ck;
  }
  return total;
}

BoundValue solvegp_elbo(const OrthState& state, const Matrix& X, const Matrix& y) {
  SolveGpObjective obj(X, y, state.lik, state.hyper.kernel.family, state.scaling.mode);
  ParamVector p = pack_solvegp(state);
  if (!p.has(kLogNoise)) p.add(kLogNoise, Matrix::Constant(1, 1, state.hyper.log_noise_variance));
  return evaluate(obj, p);
}

OrthPrediction predict_solvegp(const OrthState& state, const Matrix& Xstar) {
  ad::Tape tape;
  ParamVector p = pack_solvegp(state);
  Bindings b = bind(tape, p, true);
  const ad::KernelVars kv = ad::kernel_vars(b, state.hyper.kernel.family);
  ad::Var zu = b.at(kInducing);
  ad::Var zv = b.at(kInducingV);
  const ad::OrthMarginals om = ad::orth_marginals(kv, zu, zv, tape.constant(Xstar),
                                                  ad::q_vars(b, "qu", zu.rows()),
                                                  ad::q_vars(b, "qv", zv.rows()));
  OrthPrediction out;
  const Index l = static_cast<Index>(om.means.size());
  out.mean.resize(Xstar.rows(), l);
  out.var.resize(Xstar.rows(), l);
  for (Index i = 0; i < l; ++i) {
    out.mean.col(i) = om.means[i].value();
    out.var.col(i) = om.d.value() + om.s_vars[i].value();
  }
  return out;
}

namespace ad {

OrthMarginals orth_marginals(const KernelVars& kv, Var Zu, Var Zv, Var x,
                             const std::vector<QVars>& qu, const std::vector<QVars>& qv) {
  Var kuu = kernel_matrix(kv, Zu, Zu);
  double jitter = 0.0;
  Var lu = cholesky_ladder(kuu, scaled_ladder(kuu.value()), &jitter);
  Var kvv = kernel_matrix(kv, Zv, Zv);
  Var auv = solve_lower(lu, kernel_matrix(kv, Zu, Zv));  // Mu x Mv
  Var cvv = kvv - matmul(transpose(auv), auv);
  Var lc = cholesky_ladder(cvv, scaled_ladder(kvv.value()), &jitter);

  Var au = solve_lower(lu, kernel_matrix(kv, Zu, x));  // Mu x N
  Var cvf = kernel_matrix(kv, Zv, x) - matmul(transpose(auv), au);
  Var ac = solve_lower(lc, cvf);  // Mv x N
  Var kff = kernel_diagonal(kv, x.rows());
  Var d_raw = kff - transpose(col_sums(square(au))) - transpose(col_sums(square(ac)));
  checked_conditional_variance(kff.value().col(0), d_raw.value().col(0));

  OrthMarginals out;
  out.d = clamp_min(d_raw, 0.0);
  for (std::size_t l = 0; l < qu.size(); ++l) {
    const QComponent cu = q_component(lu, au, qu[l].mean, qu[l].chol);
    const QComponent cv = q_component(lc, ac, qv[l].mean, qv[l].chol);
    out.means.push_back(cu.mean + cv.mean);
    out.s_vars.push_back(cu.s_var + cv.s_var);
    out.kl_u = out.kl_u.valid() ? out.kl_u + cu.kl : cu.kl;
    out.kl_v = out.kl_v.valid() ? out.kl_v + cv.kl : cv.kl;
  }
  return out;
}

}  // namespace ad

}  // namespace sparsegp
