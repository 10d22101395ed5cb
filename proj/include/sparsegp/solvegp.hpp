#pragma once

// SOLVE-GP: two inducing sets u and v, with v parameterised against the
// covariance left over after conditioning on u.

#include "sparsegp/kernels.hpp"
#include "sparsegp/likelihoods.hpp"
#include "sparsegp/params.hpp"
#include "sparsegp/variational.hpp"

#include <utility>
#include <vector>

namespace sparsegp {

struct OrthState {
  Hyperparams hyper;
  Matrix Zu;
  Matrix Zv;
  std::vector<VariationalGaussian> qu;  // one per latent, dim Mu
  std::vector<VariationalGaussian> qv;  // one per latent, dim Mv, against C_vv
  ConditionalScaling scaling;
  Likelihood lik;
};

struct OrthCov {
  Matrix kuu_chol;  // Mu x Mu
  Matrix cvv_chol;  // Mv x Mv, factor of C_vv + jitter
  Matrix kfu;       // N x Mu
  Matrix kfv;       // N x Mv
  Matrix kvu;       // Mv x Mu
  Vector kff_diag;
  Vector d;  // diag(K_ff - K_{f,uv} K_{uv,uv}^{-1} K_{uv,f}), clamped
};

OrthCov build_orth_cov(const Hyperparams& h, const Matrix& Zu, const Matrix& Zv, const Matrix& X);

/// Both factors at their priors (S_u = K_uu, S_v = C_vv).
OrthState init_solvegp(const Hyperparams& hyper, const Matrix& Zu, const Matrix& Zv,
                       const Likelihood& lik, ScalingMode mode, Index num_data = 0);

/// Marginal of q(f_n) at training point n for one latent.
std::pair<double, double> orth_training_marginal(const OrthState& state, const OrthCov& oc,
                                                 Index n, Index latent = 0);

BoundValue solvegp_elbo(const OrthState& state, const Matrix& X, const Matrix& y);

inline constexpr const char* kInducingV = "orth.Zv";

ParamVector pack_solvegp(const OrthState& state);
OrthState unpack_solvegp(const ParamVector& p, const OrthState& like);

class SolveGpObjective : public Objective {
 public:
  SolveGpObjective(Matrix X, Matrix y, Likelihood lik, KernelFamily family, ScalingMode mode);

  std::string id() const override;
  Index num_data() const override { return X_.rows(); }
  ad::Var build(ad::Tape& tape, const Bindings& params, const EvalContext& ctx,
                TermMap* terms) const override;

 private:
  Matrix X_;
  Matrix y_;
  Likelihood lik_;
  KernelFamily family_;
  ScalingMode mode_;
};

/// Test-time latent mean and variance (N x L each). The variance keeps the
/// full conditional d and drops the scaling correction.
struct OrthPrediction {
  Matrix mean;
  Matrix var;
};
OrthPrediction predict_solvegp(const OrthState& state, const Matrix& Xstar);

namespace ad {

struct OrthMarginals {
  Var d;                    // N x 1
  std::vector<Var> means;   // per latent, N x 1
  std::vector<Var> s_vars;  // per latent, N x 1 (u and v covariance terms)
  Var kl_u;                 // summed over latents
  Var kl_v;
};

OrthMarginals orth_marginals(const KernelVars& kv, Var Zu, Var Zv, Var x,
                             const std::vector<QVars>& qu, const std::vector<QVars>& qv);

}  // namespace ad

}  // namespace sparsegp
