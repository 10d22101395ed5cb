#pragma once

// Bayesian GPLVM with an explicit q(u_p) per output and reparameterised
// Monte Carlo over q(x).

#include "sparsegp/kernels.hpp"
#include "sparsegp/params.hpp"
#include "sparsegp/variational.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparsegp {

struct LatentVariational {
  Matrix mu;     // N x Q
  Matrix log_s;  // N x Q, log standard deviations
};

enum class GplvmScaling { Identity, PointwiseOptimal };

struct GplvmState {
  LatentVariational latent;
  Hyperparams hyper;
  Matrix Z;                             // M x Q
  std::vector<VariationalGaussian> qu;  // one per output column
  GplvmScaling scaling_mode = GplvmScaling::Identity;
};

/// sum KL[N(mu, s^2) || N(0, 1)] over all entries.
double kl_latent(const LatentVariational& latent);

/// Monte Carlo ELBO; deterministic given (state, Y, mc_samples, seed).
BoundValue gplvm_elbo(const GplvmState& state, const Matrix& Y, int mc_samples, std::uint64_t seed);

struct GplvmInit {
  Index latent_dim = 2;
  Index num_inducing = 20;
  double latent_sd = 0.3;
  KernelFamily family = KernelFamily::SquaredExponential;
  std::uint64_t seed = 0;
};

/// PCA latent means (unit variance per dimension), inducing points spread
/// over them by init_inducing, q(u_p) optimal for the PCA inputs.
GplvmState init_gplvm(const Matrix& Y, GplvmScaling mode, const GplvmInit& init);

inline constexpr const char* kLatentMu = "latent.mu";
inline constexpr const char* kLatentLogS = "latent.log_s";

ParamVector pack_gplvm(const GplvmState& state);
GplvmState unpack_gplvm(const ParamVector& p, const GplvmState& like);

class GplvmObjective : public Objective {
 public:
  GplvmObjective(Matrix Y, KernelFamily family, GplvmScaling mode, int mc_samples,
                 std::uint64_t seed);

  std::string id() const override;
  Index num_data() const override { return Y_.rows(); }
  ad::Var build(ad::Tape& tape, const Bindings& params, const EvalContext& ctx,
                TermMap* terms) const override;

  /// Maximum redraws of a Monte Carlo sample whose covariances fail.
  static constexpr int kMaxRetries = 5;

 private:
  Matrix Y_;
  KernelFamily family_;
  GplvmScaling mode_;
  int mc_samples_;
  std::uint64_t seed_;
};

}  // namespace sparsegp
