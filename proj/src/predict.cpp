#include "sparsegp/predict.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include <cmath>
#include <numbers>

namespace sparsegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double log_mean_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().mean());
}

}  // namespace

std::string to_string(VarianceMode mode) { return mode == VarianceMode::Full ? "full" : "simplified"; }

VarianceMode variance_mode_from_string(const std::string& name) {
  if (name == "full") return VarianceMode::Full;
  if (name == "simplified") return VarianceMode::Simplified;
  throw InputError("unknown variance mode '" + name + "'");
}

PredictiveDist predict(const SvgpState& state, const Matrix& X_train, const Matrix& Xstar,
                       VarianceMode mode, const PredictOptions& opts) {
  if (opts.latent < 0 || opts.latent >= static_cast<Index>(state.qu.size())) {
    throw InputError("predict: latent index out of range");
  }
  if (mode == VarianceMode::Full && X_train.rows() > opts.full_cap) {
    throw CapabilityError("Full variance mode needs a dense " + std::to_string(X_train.rows()) +
                          "-point D_ff, above the cap of " + std::to_string(opts.full_cap) +
                          "; use the simplified mode");
  }
  const VariationalGaussian& q = state.qu[opts.latent];
  const Matrix kuu = kernel_eval(state.hyper.kernel, state.Z, state.Z);
  const Matrix l = cholesky_jitter(kuu, scaled_ladder(kuu)).lower;
  const auto lv = l.triangularView<Eigen::Lower>();

  const Matrix a_star = lv.solve(kernel_eval(state.hyper.kernel, state.Z, Xstar));  // M x T
  const Matrix w_star = lv.transpose().solve(a_star);                               // K_uu^{-1} K_u*
  PredictiveDist out;
  out.mode = mode;
  out.mean = w_star.transpose() * q.mean;
  const Vector kss = kernel_diag(state.hyper.kernel, Xstar);
  Vector var = kss - a_star.colwise().squaredNorm().transpose() +
               (q.cov_factor.transpose() * w_star).colwise().squaredNorm().transpose();

  if (mode == VarianceMode::Full) {
    const Matrix a = lv.solve(kernel_eval(state.hyper.kernel, state.Z, X_train));  // M x N
    Matrix dff = kernel_eval(state.hyper.kernel, X_train, X_train) - a.transpose() * a;
    dff = 0.5 * (dff + dff.transpose());
    const Vector d = checked_conditional_variance(dff.diagonal(), dff.diagonal());
    const Vector m = realize_m(state.scaling, d);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(dff);
    const Vector lambda = eig.eigenvalues();
    const double cutoff = opts.pinv_cutoff * std::max(lambda.maxCoeff(), 0.0);
    Vector inv_root(lambda.size());
    for (Index i = 0; i < lambda.size(); ++i) inv_root(i) = lambda(i) > cutoff ? 1.0 / std::sqrt(lambda(i)) : 0.0;
    const Matrix g = kernel_eval(state.hyper.kernel, X_train, Xstar) - a.transpose() * a_star;  // N x T
    const Matrix& v = eig.eigenvectors();
    const Matrix r = v * (inv_root.asDiagonal() * (v.transpose() * g));  // D^{-1/2} (k_f* - Q_f*)
    const Vector one_minus_m = (1.0 - m.array()).matrix();
    var -= (r.array().square().colwise() * one_minus_m.array()).colwise().sum().transpose().matrix();
  }

  for (Index t = 0; t < var.size(); ++t) {
    if (!(var(t) >= -1e-8 * std::max(1.0, kss(t)))) {
      throw NumericalError("predictive variance " + std::to_string(var(t)) + " is negative beyond tolerance");
    }
  }
  out.var = var.cwiseMax(0.0);
  return out;
}

double training_point_var(const SvgpState& state, const CovBundle& bundle, Index n, Index latent) {
  if (n < 0 || n >= bundle.kfu.rows()) throw InputError("training_point_var: index out of range");
  if (latent < 0 || latent >= static_cast<Index>(state.qu.size())) {
    throw InputError("training_point_var: latent index out of range");
  }
  const auto lv = bundle.kuu_chol.triangularView<Eigen::Lower>();
  const Vector a = lv.solve(Vector(bundle.kfu.row(n).transpose()));
  const Vector w = lv.transpose().solve(a);
  const double m_n = realize_m(state.scaling, bundle.d)(n);
  return m_n * bundle.d(n) + (state.qu[latent].cov_factor.transpose() * w).squaredNorm();
}

double predictive_log_density(const Likelihood& lik, const Vector& mean, const Vector& var,
                              double y, double noise_variance, std::uint64_t point_key) {
  switch (lik.kind) {
    case LikelihoodKind::Gaussian: {
      const double v = var(0) + noise_variance;
      const double r = y - mean(0);
      return -0.5 * (kLog2Pi + std::log(v)) - 0.5 * r * r / v;
    }
    case LikelihoodKind::Bernoulli: {
      const GaussHermite gh = gauss_hermite(lik.quadrature_order);
      const double sign = y > 0.5 ? 1.0 : -1.0;
      Vector terms(gh.nodes.size());
      for (Index i = 0; i < gh.nodes.size(); ++i) {
        terms(i) = std::log(gh.weights(i) / std::sqrt(std::numbers::pi)) +
                   log_sigmoid(sign * (mean(0) + std::sqrt(2.0 * var(0)) * gh.nodes(i)));
      }
      const double mx = terms.maxCoeff();
      return mx + std::log((terms.array() - mx).exp().sum());
    }
    case LikelihoodKind::Categorical: {
      const int label = static_cast<int>(std::lround(y));
      if (label < 0 || label >= mean.size()) throw InputError("class label out of range");
      Vector logp(lik.mc_samples);
      Vector f(mean.size());
      for (int s = 0; s < lik.mc_samples; ++s) {
        for (Index c = 0; c < f.size(); ++c) {
          f(c) = mean(c) + std::sqrt(var(c)) * counter_normal(lik.seed ^ 0x5bd1e995ULL, point_key, s, c);
        }
        const double mx = f.maxCoeff();
        logp(s) = f(label) - (mx + std::log((f.array() - mx).exp().sum()));
      }
      return log_mean_exp(logp);
    }
  }
  return 0.0;
}

RegressionMetrics regression_metrics(const Vector& mean, const Vector& var, double noise_variance,
                                     const Vector& y_original, double shift, double scale) {
  if (mean.size() != y_original.size() || var.size() != y_original.size()) {
    throw InputError("regression_metrics: length mismatch");
  }
  RegressionMetrics out;
  double se = 0.0, ll = 0.0;
  for (Index i = 0; i < mean.size(); ++i) {
    const double mu = mean(i) * scale + shift;
    const double v = (var(i) + noise_variance) * scale * scale;
    const double r = y_original(i) - mu;
    se += r * r;
    ll += -0.5 * (kLog2Pi + std::log(v)) - 0.5 * r * r / v;
  }
  const double n = static_cast<double>(mean.size());
  out.rmse = std::sqrt(se / n);
  out.mean_log_lik = ll / n;
  return out;
}

}  // namespace sparsegp
