#include "sparsegp/gplvm.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sparsegp {

double kl_latent(const LatentVariational& latent) {
  if (latent.mu.rows() != latent.log_s.rows() || latent.mu.cols() != latent.log_s.cols()) {
    throw InputError("kl_latent: mu and log_s shapes differ");
  }
  const Eigen::ArrayXXd s2 = (2.0 * latent.log_s.array()).exp();
  return 0.5 * (latent.mu.array().square() + s2 - 1.0 - 2.0 * latent.log_s.array()).sum();
}

GplvmState init_gplvm(const Matrix& Y, GplvmScaling mode, const GplvmInit& init) {
  const Index n = Y.rows();
  const Index q = init.latent_dim;
  if (q < 1 || q > Y.cols()) throw InputError("init_gplvm: latent dimension out of range");
  if (init.num_inducing < 1 || init.num_inducing > n) {
    throw InputError("init_gplvm: inducing count out of range");
  }
  const Matrix centered = Y.rowwise() - Y.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix mu = centered * svd.matrixV().leftCols(q);
  for (Index j = 0; j < q; ++j) {
    const double sd = std::sqrt(mu.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) mu.col(j) /= sd;
  }

  GplvmState s;
  s.scaling_mode = mode;
  s.latent.mu = mu;
  s.latent.log_s = Matrix::Constant(n, q, std::log(init.latent_sd));

  s.Z = init_inducing(mu, init.num_inducing, init.seed);

  const double yvar = std::max(1e-6, centered.squaredNorm() / static_cast<double>(n * Y.cols()));
  s.hyper.kernel.family = init.family;
  s.hyper.kernel.log_variance = std::log(yvar);
  s.hyper.kernel.log_lengthscales = Vector::Zero(q);
  s.hyper.log_noise_variance = std::log(0.1 * yvar);
  for (Index p = 0; p < Y.cols(); ++p) s.qu.push_back(optimal_qu(s.hyper, s.Z, mu, Y.col(p)));
  return s;
}

ParamVector pack_gplvm(const GplvmState& state) {
  ParamVector p;
  p.add(kLatentMu, state.latent.mu);
  p.add(kLatentLogS, state.latent.log_s);
  add_hyperparams(p, state.hyper);
  p.add(kInducing, state.Z);
  add_q(p, "qu", state.qu);
  return p;
}

GplvmState unpack_gplvm(const ParamVector& p, const GplvmState& like) {
  GplvmState s = like;
  s.latent.mu = p.get(kLatentMu);
  s.latent.log_s = p.get(kLatentLogS);
  s.hyper = read_hyperparams(p, like.hyper.kernel.family);
  s.Z = p.get(kInducing);
  s.qu = read_q(p, "qu");
  return s;
}

GplvmObjective::GplvmObjective(Matrix Y, KernelFamily family, GplvmScaling mode, int mc_samples,
                               std::uint64_t seed)
    : Y_(std::move(Y)), family_(family), mode_(mode), mc_samples_(mc_samples), seed_(seed) {
  if (mc_samples_ < 1) throw InputError("gplvm: mc_samples must be at least 1");
}

std::string GplvmObjective::id() const {
  return mode_ == GplvmScaling::Identity ? "gplvm" : "t-gplvm";
}

ad::Var GplvmObjective::build(ad::Tape& tape, const Bindings& b, const EvalContext& ctx,
                              TermMap* terms) const {
  using namespace ad;
  Var mu = b.at(kLatentMu);
  Var log_s = b.at(kLatentLogS);
  const Index n = mu.rows();
  const Index q = mu.cols();
  if (n != Y_.rows()) throw InputError("gplvm: latent rows do not match Y");
  const KernelVars kv = kernel_vars(b, family_);
  Var log_noise = b.at(kLogNoise);
  Var z = b.at(kInducing);
  const Index m = z.rows();
  const auto qs = q_vars(b, "qu", m);
  if (static_cast<Index>(qs.size()) != Y_.cols()) throw InputError("gplvm: one q(u) per output needed");
  const double p_out = static_cast<double>(Y_.cols());

  Var kuu = kernel_matrix(kv, z, z);
  double jitter = 0.0;
  Var lu = cholesky_ladder(kuu, scaled_ladder(kuu.value()), &jitter);
  Var s = exp(log_s);
  Var zeros = tape.constant(Matrix::Zero(n, 1));

  Var ell_sum, cond_sum;
  for (int smp = 0; smp < mc_samples_; ++smp) {
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t key = hash_key(seed_, ctx.step, static_cast<std::uint64_t>(attempt));
      Matrix eps(n, q);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < q; ++j) eps(i, j) = counter_normal(key, static_cast<std::uint64_t>(smp), i, j);
      Var x = mu + cwise_product(s, tape.constant(std::move(eps)));
      Var proj = solve_lower(lu, kernel_matrix(kv, z, x));
      Var kff = kernel_diagonal(kv, n);
      Var d_raw = kff - transpose(col_sums(square(proj)));
      try {
        checked_conditional_variance(kff.value().col(0), d_raw.value().col(0));
      } catch (const NumericalError&) {
        if (attempt + 1 >= kMaxRetries) throw;
        continue;
      }
      Var d = clamp_min(d_raw, 0.0);
      Var md = d;
      if (mode_ == GplvmScaling::PointwiseOptimal) {
        Var s2 = exp(log_noise);
        Var denom = d + s2;
        Var mv = cwise_quotient(s2 + zeros, denom);
        md = cwise_product(mv, d);
        Var ck = 0.5 * p_out * sum(((log_noise - log(denom)) + 1.0) - mv);
        cond_sum = cond_sum.valid() ? cond_sum + ck : ck;
      }
      std::vector<Var> means, vars;
      for (const auto& qp : qs) {
        const QComponent c = q_marginals(lu, proj, qp.mean, qp.chol);
        means.push_back(c.mean);
        vars.push_back(md + c.s_var);
      }
      Var ll = sum(gaussian_expected_loglik(hstack(means), hstack(vars), Y_, log_noise));
      ell_sum = ell_sum.valid() ? ell_sum + ll : ll;
      break;
    }
  }
  const double inv = 1.0 / static_cast<double>(mc_samples_);
  Var kl_x = -0.5 * sum(((square(mu) + square(s)) - 1.0) - 2.0 * log_s);
  Var kl_u;
  for (const auto& qp : qs) {
    Var k = q_kl(lu, qp.mean, qp.chol);
    kl_u = kl_u.valid() ? kl_u + k : k;
  }
  kl_u = -kl_u;
  Var ell = ell_sum * inv;
  Var total = kl_x + kl_u + ell;
  if (terms) {
    (*terms)["kl_x"] = kl_x;
    (*terms)["kl_u"] = kl_u;
    (*terms)["ell"] = ell;
  }
  if (cond_sum.valid()) {
    Var ck = cond_sum * inv;
    total = total + ck;
    if (terms) (*terms)["kl_conditional"] = ck;
  }
  return total;
}

BoundValue gplvm_elbo(const GplvmState& state, const Matrix& Y, int mc_samples, std::uint64_t seed) {
  GplvmObjective obj(Y, state.hyper.kernel.family, state.scaling_mode, mc_samples, seed);
  return evaluate(obj, pack_gplvm(state));
}

}  // namespace sparsegp
