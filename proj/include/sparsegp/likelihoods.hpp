#pragma once

#include "sparsegp/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparsegp {

enum class LikelihoodKind { Gaussian, Bernoulli, Categorical };

std::string to_string(LikelihoodKind kind);

/// Observation model. The Gaussian noise variance lives in Hyperparams and is
/// passed to the evaluation functions explicitly.
struct Likelihood {
  LikelihoodKind kind = LikelihoodKind::Gaussian;
  int num_classes = 2;
  int quadrature_order = 20;  // Bernoulli
  int mc_samples = 32;        // Categorical
  std::uint64_t seed = 0;     // Categorical

  /// Number of latent functions the model needs.
  Eigen::Index latent_dim() const;

  static Likelihood gaussian();
  static Likelihood bernoulli(int quadrature_order = 20);
  static Likelihood categorical(int num_classes, int mc_samples = 32, std::uint64_t seed = 0);
};

struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;  // for the weight function exp(-t^2)
};

/// Golub-Welsch nodes and weights of the given order.
GaussHermite gauss_hermite(int order);

/// E_{N(f; mean, var)}[log p(y | f)] for Gaussian and Bernoulli (y in {0, 1})
/// likelihoods. `noise_variance` is used by the Gaussian variant only.
double expected_loglik(const Likelihood& lik, double mean, double var, double y,
                       double noise_variance = 1.0);

/// Monte Carlo softmax expectation for one point; `point_key` selects the
/// common random numbers so repeated calls agree.
double expected_loglik_categorical(const Likelihood& lik, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& var, int label,
                                   std::uint64_t point_key);

struct QuadraturePair {
  double analytic = 0.0;
  double quadrature = 0.0;
};

/// Gaussian expected log-likelihood by closed form and by Gauss-Hermite.
QuadraturePair quadrature_check(double mean, double var, double y, double noise_variance,
                                int order = 20);

namespace ad {

/// Elementwise Gaussian expected log-likelihood; mean/var/y share a shape.
Var gaussian_expected_loglik(Var mean, Var var, const Matrix& y, Var log_noise_variance);

/// Elementwise Bernoulli-logit expected log-likelihood by Gauss-Hermite.
Var bernoulli_expected_loglik(Var mean, Var var, const Matrix& y, int order);

/// Softmax expected log-likelihood per row (N x 1). `mean` and `var` are
/// N x C; labels hold class indices; `point_keys` index the random numbers.
Var categorical_expected_loglik(Var mean, Var var, std::span<const int> labels,
                                std::span<const Index> point_keys, int samples,
                                std::uint64_t seed);

}  // namespace ad

}  // namespace sparsegp
