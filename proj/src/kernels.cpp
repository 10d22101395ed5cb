#include "sparsegp/kernels.hpp"

#include "sparsegp/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sparsegp {

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;

void check_dims(const Kernel& k, const Matrix& x, const char* which) {
  if (k.input_dim() != 1 && x.cols() != k.input_dim()) {
    throw InputError(std::string("kernel: ") + which + " has " + std::to_string(x.cols()) +
                     " columns but the kernel has " + std::to_string(k.input_dim()) +
                     " lengthscales");
  }
}

// Squared distances between rows of x1 and x2 after dividing every column by
// its lengthscale. A single lengthscale is shared by all columns.
Matrix scaled_sq_dist(const Matrix& x1, const Matrix& x2, const Vector& inv_ls) {
  Matrix r2 = Matrix::Zero(x1.rows(), x2.rows());
  for (Index d = 0; d < x1.cols(); ++d) {
    const double s = inv_ls.size() == 1 ? inv_ls(0) : inv_ls(d);
    for (Index j = 0; j < x2.rows(); ++j) {
      const double b = x2(j, d);
      for (Index i = 0; i < x1.rows(); ++i) {
        const double diff = (x1(i, d) - b) * s;
        r2(i, j) += diff * diff;
      }
    }
  }
  return r2;
}

Matrix eval_from_r2(KernelFamily family, double variance, const Matrix& r2) {
  if (family == KernelFamily::SquaredExponential) {
    return variance * (-0.5 * r2.array()).exp();
  }
  const Eigen::ArrayXXd r = r2.array().sqrt();
  return variance * (1.0 + kSqrt3 * r) * (-kSqrt3 * r).exp();
}

}  // namespace

std::string to_string(KernelFamily family) {
  return family == KernelFamily::SquaredExponential ? "se" : "matern32";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "se" || name == "rbf" || name == "squared_exponential") {
    return KernelFamily::SquaredExponential;
  }
  if (name == "matern32" || name == "matern-3/2") return KernelFamily::Matern32;
  throw InputError("unknown kernel family '" + name + "'");
}

double Kernel::variance() const { return std::exp(log_variance); }

Kernel Kernel::squared_exponential(double variance, const Vector& lengthscales) {
  return Kernel{KernelFamily::SquaredExponential, std::log(variance),
                lengthscales.array().log().matrix()};
}

Kernel Kernel::matern32(double variance, const Vector& lengthscales) {
  return Kernel{KernelFamily::Matern32, std::log(variance), lengthscales.array().log().matrix()};
}

double Hyperparams::noise_variance() const { return std::exp(log_noise_variance); }

Matrix kernel_eval(const Kernel& k, const Matrix& x, const Matrix& x2) {
  check_dims(k, x, "X");
  check_dims(k, x2, "X2");
  if (x.cols() != x2.cols()) throw InputError("kernel: X and X2 have different column counts");
  const Vector inv_ls = (-k.log_lengthscales.array()).exp();
  return eval_from_r2(k.family, k.variance(), scaled_sq_dist(x, x2, inv_ls));
}

Vector kernel_diag(const Kernel& k, const Matrix& x) {
  check_dims(k, x, "X");
  return Vector::Constant(x.rows(), k.variance());
}

CholeskyResult cholesky_jitter(const Matrix& a, std::span<const double> ladder) {
  if (a.rows() != a.cols()) throw InputError("cholesky_jitter: matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InputError("cholesky_jitter: matrix is not symmetric");
  }
  double last = 0.0;
  for (double j : ladder) {
    last = j;
    Matrix shifted = a;
    shifted.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Matrix lower = llt.matrixL();
    if (!lower.allFinite()) continue;
    return CholeskyResult{std::move(lower), j};
  }
  throw NotPositiveDefinite("cholesky_jitter: every ladder entry failed", last);
}

std::vector<double> scaled_ladder(const Matrix& a, std::span<const double> relative) {
  const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 1.0;
  std::vector<double> out;
  out.reserve(relative.size());
  for (double r : relative) out.push_back(r * mean_diag);
  return out;
}

Vector checked_conditional_variance(const Vector& kff_diag, const Vector& d_raw) {
  for (Index n = 0; n < d_raw.size(); ++n) {
    if (!(d_raw(n) >= -1e-8 * kff_diag(n))) {
      throw NumericalError("conditional variance d_" + std::to_string(n) + " = " +
                           std::to_string(d_raw(n)) + " is negative beyond tolerance");
    }
  }
  return d_raw.cwiseMax(0.0);
}

CovBundle build_bundle(const Hyperparams& h, const Matrix& z, const Matrix& x) {
  check_dims(h.kernel, x, "X");
  CovBundle b;
  b.kff_diag = kernel_diag(h.kernel, x);
  if (z.rows() == 0) {
    b.kuu_chol = Matrix(0, 0);
    b.kfu = Matrix(x.rows(), 0);
    b.d = b.kff_diag;
    return b;
  }
  check_dims(h.kernel, z, "Z");
  const Matrix kuu = kernel_eval(h.kernel, z, z);
  CholeskyResult chol = cholesky_jitter(kuu, scaled_ladder(kuu));
  b.kuu_chol = std::move(chol.lower);
  b.jitter = chol.jitter;
  b.kfu = kernel_eval(h.kernel, x, z);
  const Matrix a = b.kuu_chol.triangularView<Eigen::Lower>().solve(b.kfu.transpose());
  b.d = checked_conditional_variance(b.kff_diag, b.kff_diag - a.colwise().squaredNorm().transpose());
  return b;
}

void add_hyperparams(ParamVector& p, const Hyperparams& h, bool with_noise) {
  p.add(kLogVariance, Matrix::Constant(1, 1, h.kernel.log_variance));
  p.add(kLogLengthscales, h.kernel.log_lengthscales);
  if (with_noise) p.add(kLogNoise, Matrix::Constant(1, 1, h.log_noise_variance));
}

Hyperparams read_hyperparams(const ParamVector& p, KernelFamily family) {
  Hyperparams h;
  h.kernel.family = family;
  h.kernel.log_variance = p.scalar(kLogVariance);
  h.kernel.log_lengthscales = p.get(kLogLengthscales).col(0);
  if (p.has(kLogNoise)) h.log_noise_variance = p.scalar(kLogNoise);
  return h;
}

namespace ad {

KernelVars kernel_vars(const Bindings& b, KernelFamily family) {
  return KernelVars{family, b.at(kLogVariance), b.at(kLogLengthscales)};
}

Var kernel_matrix(const KernelVars& k, Var x1, Var x2) {
  const Index dim = k.log_lengthscales.rows();
  if (x1.cols() != x2.cols() || (dim != 1 && x1.cols() != dim)) {
    throw InputError("kernel_matrix: input dimension does not match the lengthscales");
  }
  const double variance = std::exp(k.log_variance.scalar());
  const Vector inv_ls = (-k.log_lengthscales.value().col(0).array()).exp();
  Matrix value = eval_from_r2(k.family, variance, scaled_sq_dist(x1.value(), x2.value(), inv_ls));
  const KernelFamily family = k.family;
  Var lv = k.log_variance;
  Var lls = k.log_lengthscales;
  return x1.tape().record(
      std::move(value), {lv, lls, x1, x2},
      [family, lv, lls, x1, x2](Tape& t, const Matrix& g, const Matrix& kmat) {
        const Matrix& a = t.value(x1);
        const Matrix& b = t.value(x2);
        const Vector inv_ls = (-t.value(lls).col(0).array()).exp();
        const double variance = std::exp(t.value(lv)(0, 0));
        if (t.needs_grad(lv)) t.accumulate(lv, Matrix::Constant(1, 1, g.cwiseProduct(kmat).sum()));
        const bool want_ls = t.needs_grad(lls);
        const bool want_x1 = t.needs_grad(x1);
        const bool want_x2 = t.needs_grad(x2);
        if (!want_ls && !want_x1 && !want_x2) return;

        // w_ij = dk/d(r^2) * (-2), so that dk/dlogl_d = w * delta_d^2 / l_d^2
        // and dk/dx1_d = -w * delta_d / l_d^2.
        Matrix w;
        if (family == KernelFamily::SquaredExponential) {
          w = g.cwiseProduct(kmat);
        } else {
          const Eigen::ArrayXXd r = scaled_sq_dist(a, b, inv_ls).array().sqrt();
          w = g.array() * (3.0 * variance * (-kSqrt3 * r).exp());
        }
        Matrix g_ls = Matrix::Zero(inv_ls.size(), 1);
        Matrix g_x1 = Matrix::Zero(a.rows(), a.cols());
        Matrix g_x2 = Matrix::Zero(b.rows(), b.cols());
        const bool shared = inv_ls.size() == 1;
        for (Index d = 0; d < a.cols(); ++d) {
          const Index li = shared ? 0 : d;
          const double s2 = inv_ls(li) * inv_ls(li);
          Matrix delta = a.col(d).replicate(1, b.rows()) - b.col(d).transpose().replicate(a.rows(), 1);
          Matrix wd = w.cwiseProduct(delta);
          if (want_ls) g_ls(li, 0) += wd.cwiseProduct(delta).sum() * s2;
          if (want_x1) g_x1.col(d) = -wd.rowwise().sum() * s2;
          if (want_x2) g_x2.col(d) = wd.colwise().sum().transpose() * s2;
        }
        if (want_ls) t.accumulate(lls, g_ls);
        if (want_x1) t.accumulate(x1, g_x1);
        if (want_x2) t.accumulate(x2, g_x2);
      });
}

Var kernel_diagonal(const KernelVars& k, Index n) {
  return cwise_product(exp(k.log_variance), k.log_variance.tape().constant(Matrix::Ones(n, 1)));
}

InducingConditional inducing_conditional(const KernelVars& k, Var z, Var x) {
  InducingConditional out;
  Var kuu = kernel_matrix(k, z, z);
  const std::vector<double> ladder = scaled_ladder(kuu.value());
  out.kuu_chol = cholesky_ladder(kuu, ladder, &out.jitter);
  Var kuf = kernel_matrix(k, z, x);
  out.proj = solve_lower(out.kuu_chol, kuf);
  out.kff_diag = kernel_diagonal(k, x.rows());
  Var d_raw = out.kff_diag - transpose(col_sums(square(out.proj)));
  checked_conditional_variance(out.kff_diag.value().col(0), d_raw.value().col(0));
  out.d = clamp_min(d_raw, 0.0);
  return out;
}

}  // namespace ad

}  // namespace sparsegp
