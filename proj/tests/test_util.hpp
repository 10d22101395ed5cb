#pragma once

#include "oracles.hpp"
#include "sparsegp/kernels.hpp"

#include <cmath>

namespace testutil {

inline sparsegp::Hyperparams hyper_of(const oracle::Instance& in) {
  sparsegp::Hyperparams h;
  h.kernel = in.matern ? sparsegp::Kernel::matern32(in.var, in.ls) : sparsegp::Kernel::squared_exponential(in.var, in.ls);
  h.log_noise_variance = std::log(in.noise);
  return h;
}

/// A random lower-triangular factor with positive diagonal.
inline Eigen::MatrixXd random_chol(std::mt19937_64& rng, Eigen::Index m, double scale = 0.5) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = j + 1; i < m; ++i) l(i, j) = scale * g(rng);
    l(j, j) = scale * std::exp(0.3 * g(rng));
  }
  return l;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

}  // namespace testutil
