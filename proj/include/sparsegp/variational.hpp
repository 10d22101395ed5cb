#pragma once

#include "sparsegp/kernels.hpp"
#include "sparsegp/likelihoods.hpp"
#include "sparsegp/params.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparsegp {

/// Free-form Gaussian q(u) = N(mean, L L^T).
struct VariationalGaussian {
  Vector mean;
  Matrix cov_factor;  // lower triangular, positive diagonal

  Index dim() const { return mean.size(); }
  Matrix covariance() const;
  /// q(u) = p(u) = N(0, K_uu).
  static VariationalGaussian prior(const Matrix& kuu_chol);
};

enum class ScalingMode { Identity, PerPoint, BetaShared, ScalarShared };

std::string to_string(ScalingMode mode);
ScalingMode scaling_mode_from_string(const std::string& name);

/// Parameterisation of the diagonal conditional scaling M.
struct ConditionalScaling {
  ScalingMode mode = ScalingMode::Identity;
  Vector log_m;               // PerPoint
  double log_beta = 0.0;      // BetaShared
  double log_m_shared = 0.0;  // ScalarShared

  static ConditionalScaling identity();
  static ConditionalScaling per_point(const Vector& m);
  static ConditionalScaling beta_shared(double beta);
  static ConditionalScaling scalar_shared(double m);
};

Vector realize_m(const ConditionalScaling& scaling, const Vector& d);

/// 0.5 * sum(1 + log m - m); never positive.
double conditional_kl(const Vector& m);

/// KL[N(mean, S) || N(0, K_uu)] from the factor of K_uu.
double kl_qu(const VariationalGaussian& qu, const Matrix& kuu_chol);

struct SvgpState {
  Hyperparams hyper;
  Matrix Z;
  std::vector<VariationalGaussian> qu;  // one per latent function
  ConditionalScaling scaling;
  Likelihood lik;
};

/// q(u) at the prior for every latent. BetaShared starts at beta = sigma^2
/// (1 for non-Gaussian likelihoods); PerPoint needs `num_data`.
SvgpState init_svgp(const Hyperparams& hyper, const Matrix& Z, const Likelihood& lik,
                    ScalingMode mode, Index num_data = 0);

/// F0 (Identity scaling) or F2 over all rows. For Categorical, y holds class
/// indices; for Bernoulli, 0/1.
BoundValue elbo(const SvgpState& state, const Matrix& X, const Matrix& y);

/// Unbiased estimate of elbo from the rows in `batch`; n_total defaults to
/// X.rows().
BoundValue minibatch_elbo(const SvgpState& state, const Matrix& X, const Matrix& y,
                          std::span<const Index> batch, Index n_total = -1);

/// m rows of X picked by farthest-point selection from a seeded start. Rows
/// repeat only when X has fewer than m distinct rows.
Matrix init_inducing(const Matrix& X, Index m, std::uint64_t seed);

// Packing into optimizer parameters.
inline constexpr const char* kInducing = "inducing.Z";
inline constexpr const char* kLogBeta = "scaling.log_beta";
inline constexpr const char* kLogM = "scaling.log_m";

void add_q(ParamVector& p, const std::string& prefix, const std::vector<VariationalGaussian>& q);
std::vector<VariationalGaussian> read_q(const ParamVector& p, const std::string& prefix);
void add_scaling(ParamVector& p, const ConditionalScaling& s);
ConditionalScaling read_scaling(const ParamVector& p, ScalingMode mode);

ParamVector pack_svgp(const SvgpState& state);
/// Inverse of pack_svgp; `like` supplies the fixed fields (family, mode,
/// likelihood, and the noise when it is not trained).
SvgpState unpack_svgp(const ParamVector& p, const SvgpState& like);

/// F0/F2 evaluated over parameters packed by pack_svgp.
class SvgpObjective : public Objective {
 public:
  SvgpObjective(Matrix X, Matrix y, Likelihood lik, KernelFamily family, ScalingMode mode);

  std::string id() const override;
  Index num_data() const override { return X_.rows(); }
  ad::Var build(ad::Tape& tape, const Bindings& params, const EvalContext& ctx,
                TermMap* terms) const override;

  /// Optional override of the data count used to scale batch sums.
  void set_total(Index n) { n_total_ = n; }

 private:
  Matrix X_;
  Matrix y_;
  Likelihood lik_;
  KernelFamily family_;
  ScalingMode mode_;
  Index n_total_ = -1;
};

namespace ad {

/// Contribution of one Gaussian factor q = N(mean, chol chol^T) measured
/// against the prior N(0, prior_chol prior_chol^T), seen through
/// proj = prior_chol^{-1} K_{.f}.
struct QComponent {
  Var mean;   // N x 1
  Var s_var;  // N x 1, proj^T L^{-1} S L^{-T} proj diagonal
  Var kl;     // 1 x 1
};

QComponent q_component(Var prior_chol, Var proj, Var mean, Var chol);
/// The same pieces separately, for callers that reuse the KL.
QComponent q_marginals(Var prior_chol, Var proj, Var mean, Var chol);
Var q_kl(Var prior_chol, Var mean, Var chol);

/// Per-latent tape views of the packed q blocks.
struct QVars {
  Var mean;  // M x 1
  Var chol;  // M x M lower
};
std::vector<QVars> q_vars(const Bindings& b, const std::string& prefix, Index m);

struct ScaledM {
  Var m;
  Var log_m;
  bool identity = false;
};

/// Realized m on the rows given by `rows` (indices into the PerPoint
/// vector) with conditional variances d of those rows.
ScaledM realize_m(ScalingMode mode, const Bindings& b, Var d, std::span<const Index> rows);

/// 0.5 * sum(1 + log m - m).
Var conditional_kl(const ScaledM& m);

/// Sum of expected log-likelihoods over rows. `mean` and `var` are N x L.
Var expected_loglik_sum(const Likelihood& lik, const Bindings& b, Var mean, Var var,
                        const Matrix& y, std::span<const Index> keys, std::uint64_t step);

}  // namespace ad

/// All row indices 0..n-1.
std::vector<Index> all_rows(Index n);
Matrix select_rows(const Matrix& a, std::span<const Index> rows);

}  // namespace sparsegp
