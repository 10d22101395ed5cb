#pragma once

#include "sparsegp/autodiff.hpp"
#include "sparsegp/params.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace sparsegp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class KernelFamily { SquaredExponential, Matern32 };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Stationary covariance function with ARD lengthscales, stored on log scale.
/// A single lengthscale is shared across every input column (isotropic).
struct Kernel {
  KernelFamily family = KernelFamily::SquaredExponential;
  double log_variance = 0.0;
  Vector log_lengthscales = Vector::Zero(1);

  Index input_dim() const { return log_lengthscales.size(); }
  double variance() const;

  static Kernel squared_exponential(double variance, const Vector& lengthscales);
  static Kernel matern32(double variance, const Vector& lengthscales);
};

/// Kernel plus Gaussian observation noise.
struct Hyperparams {
  Kernel kernel;
  double log_noise_variance = 0.0;

  double noise_variance() const;
};

/// Default relative jitter ladder; multiplied by the mean diagonal of the
/// matrix being factorized.
inline constexpr double kDefaultJitterLadder[] = {0.0, 1e-8, 1e-6, 1e-4};

struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;
};

/// Cross-covariance between the rows of `x` and `x2`.
Matrix kernel_eval(const Kernel& k, const Matrix& x, const Matrix& x2);

/// Diagonal of kernel_eval(k, x, x) without forming the matrix.
Vector kernel_diag(const Kernel& k, const Matrix& x);

/// Factorizes a + j I for the first ladder entry j (absolute) that succeeds.
CholeskyResult cholesky_jitter(const Matrix& a, std::span<const double> ladder);

/// The ladder scaled by the mean diagonal of `a`, as used by every module.
std::vector<double> scaled_ladder(const Matrix& a, std::span<const double> relative =
                                                       std::span<const double>(kDefaultJitterLadder));

/// Cached quantities shared by every inducing-point objective.
struct CovBundle {
  Matrix kuu_chol;  // M x M, lower factor of K_uu + jitter
  Matrix kfu;       // N x M
  Vector kff_diag;  // N
  Vector d;         // N, diag(K_ff - Q_ff) clamped at zero
  double jitter = 0.0;
};

CovBundle build_bundle(const Hyperparams& h, const Matrix& z, const Matrix& x);

/// Throws NumericalError if any d_n < -1e-8 * kff_n, then clamps at zero.
Vector checked_conditional_variance(const Vector& kff_diag, const Vector& d_raw);

/// Parameter block names shared by every model.
inline constexpr const char* kLogVariance = "kernel.log_variance";
inline constexpr const char* kLogLengthscales = "kernel.log_lengthscales";
inline constexpr const char* kLogNoise = "likelihood.log_noise_variance";

void add_hyperparams(ParamVector& p, const Hyperparams& h, bool with_noise = true);
/// Reads the kernel blocks (and the noise block if present).
Hyperparams read_hyperparams(const ParamVector& p, KernelFamily family);

namespace ad {

/// Tape handles for the trainable kernel and noise parameters.
struct KernelVars {
  KernelFamily family = KernelFamily::SquaredExponential;
  Var log_variance;      // 1 x 1
  Var log_lengthscales;  // D x 1
};

KernelVars kernel_vars(const Bindings& b, KernelFamily family);

/// Gram matrix node k(x1, x2) differentiable in both inputs and the
/// kernel parameters.
Var kernel_matrix(const KernelVars& k, Var x1, Var x2);

/// Column of n copies of the signal variance.
Var kernel_diagonal(const KernelVars& k, Index n);

/// Inducing-point quantities recorded on a tape.
struct InducingConditional {
  Var kuu_chol;  // M x M
  Var proj;      // L^{-1} K_uf, M x N
  Var kff_diag;  // N x 1
  Var d;         // N x 1, clamped at zero
  double jitter = 0.0;
};

InducingConditional inducing_conditional(const KernelVars& k, Var z, Var x);

}  // namespace ad

}  // namespace sparsegp
