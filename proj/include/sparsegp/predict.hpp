#pragma once

#include "sparsegp/kernels.hpp"
#include "sparsegp/likelihoods.hpp"
#include "sparsegp/variational.hpp"

#include <string>

namespace sparsegp {

enum class VarianceMode { Full, Simplified };

std::string to_string(VarianceMode mode);
VarianceMode variance_mode_from_string(const std::string& name);

/// Latent (noiseless) predictive marginals.
struct PredictiveDist {
  Vector mean;
  Vector var;
  VarianceMode mode = VarianceMode::Simplified;
};

struct PredictOptions {
  Index full_cap = 4000;      // largest training set Full mode will diagonalize
  double pinv_cutoff = 1e-10;  // relative eigenvalue cutoff for D_ff^{-1/2}
  Index latent = 0;
};

/// Full mode subtracts (k_*f - Q_*f) V_ff (k_f* - Q_f*) with
/// V_ff = D^{-1/2} (I - M) D^{-1/2}, D^{1/2} the symmetric square root.
PredictiveDist predict(const SvgpState& state, const Matrix& X_train, const Matrix& Xstar,
                       VarianceMode mode = VarianceMode::Simplified,
                       const PredictOptions& opts = {});

/// m_n d_n + k_nu K_uu^{-1} S_u K_uu^{-1} k_un.
double training_point_var(const SvgpState& state, const CovBundle& bundle, Index n,
                          Index latent = 0);

/// log p(y* | data) for one point given latent marginals (one entry per
/// latent). Gaussian adds the noise variance; Bernoulli and Categorical
/// integrate the link numerically.
double predictive_log_density(const Likelihood& lik, const Vector& mean, const Vector& var,
                              double y, double noise_variance, std::uint64_t point_key = 0);

struct RegressionMetrics {
  double rmse = 0.0;
  double mean_log_lik = 0.0;
};

/// Metrics in original units: predictions are mean * scale + shift with
/// variance (var + noise) * scale^2, compared with y_original.
RegressionMetrics regression_metrics(const Vector& mean, const Vector& var, double noise_variance,
                                     const Vector& y_original, double shift = 0.0,
                                     double scale = 1.0);

}  // namespace sparsegp
