#pragma once

// Objective ids as used on the command line, mapped to objectives, initial
// parameters and predictions.

#include "sparsegp/gplvm.hpp"
#include "sparsegp/kernels.hpp"
#include "sparsegp/likelihoods.hpp"
#include "sparsegp/params.hpp"
#include "sparsegp/predict.hpp"
#include "sparsegp/training.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace sparsegp {

enum class ModelKind { Sgpr, TSgpr, Svgp, TSvgp, SolveGp, TSolveGp, Gplvm, TGplvm };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);
std::vector<std::string> model_names();

/// True for the variants with the scaled conditional (t-*).
bool is_tight(ModelKind kind);
bool is_collapsed(ModelKind kind);
bool is_gplvm(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::TSgpr;
  KernelFamily family = KernelFamily::SquaredExponential;
  bool ard = true;
  Index num_inducing = 20;  // total; SOLVE-GP splits it evenly between u and v
  Likelihood lik = Likelihood::gaussian();
  std::uint64_t seed = 0;
  int mc_samples = 8;  // GPLVM training samples
  Index latent_dim = 2;
};

struct Model {
  std::unique_ptr<Objective> objective;
  ParamVector init;
};

/// Signal variance var(y), lengthscales from the input column spreads, noise
/// 0.1 var(y). Non-Gaussian likelihoods start at unit signal variance.
Hyperparams default_hyperparams(const Matrix& X, const Matrix& y, const ModelConfig& config);

/// For GPLVM kinds `y` is the observed matrix Y and `X` is ignored.
Model make_model(const ModelConfig& config, const Matrix& X, const Matrix& y);

/// Latent marginals, N* x L.
struct Prediction {
  Matrix mean;
  Matrix var;
};

/// Predictions from trained parameters. Full mode is only defined for the
/// SGPR/SVGP families; GPLVM kinds have no input space to predict at.
Prediction predict_model(const ModelConfig& config, const ParamVector& params,
                         const Matrix& X_train, const Matrix& y_train, const Matrix& Xstar,
                         VarianceMode mode = VarianceMode::Simplified, Index full_cap = 4000);

/// exp(log noise) when the parameters carry it, otherwise 0.
double noise_variance_of(const ParamVector& params);

/// log p(y*_i | data) per test row; `eval_samples` overrides the
/// categorical Monte Carlo count.
Vector test_log_density(const ModelConfig& config, const Prediction& pred, const Matrix& y_test,
                        double noise_variance, int eval_samples = 256);

}  // namespace sparsegp
