#pragma once

// Dense, deliberately naive reference computations. Nothing here calls into
// the library: kernels are scalar loops, inverses and determinants come from
// full-pivot LU, and every bound is built from explicit N x N matrices.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double se(const Vector& a, const Vector& b, double var, const Vector& ls) {
  double r2 = 0.0;
  for (Index d = 0; d < a.size(); ++d) r2 += std::pow((a(d) - b(d)) / ls(d), 2);
  return var * std::exp(-0.5 * r2);
}

inline double matern32(const Vector& a, const Vector& b, double var, const Vector& ls) {
  double r2 = 0.0;
  for (Index d = 0; d < a.size(); ++d) r2 += std::pow((a(d) - b(d)) / ls(d), 2);
  const double r = std::sqrt(r2);
  return var * (1.0 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
}

inline Matrix gram(const Matrix& x, const Matrix& x2, double var, const Vector& ls, bool matern = false) {
  Matrix k(x.rows(), x2.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x2.rows(); ++j) {
      const Vector a = x.row(i).transpose(), b = x2.row(j).transpose();
      k(i, j) = matern ? matern32(a, b, var, ls) : se(a, b, var, ls);
    }
  return k;
}

inline Matrix inv(const Matrix& a) { return a.fullPivLu().inverse(); }

inline double logdet(const Matrix& a) {
  // Product of LU pivots; the matrices passed here are positive definite.
  const Eigen::FullPivLU<Matrix> lu(a);
  double s = 0.0;
  const Matrix& u = lu.matrixLU();
  for (Index i = 0; i < u.rows(); ++i) s += std::log(std::abs(u(i, i)));
  return s;
}

inline double log_gauss(const Vector& y, const Vector& mean, const Matrix& cov) {
  const Vector r = y - mean;
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + logdet(cov) + r.dot(inv(cov) * r));
}

inline double gauss_kl(const Vector& m0, const Matrix& s0, const Vector& m1, const Matrix& s1) {
  const Matrix s1i = inv(s1);
  const Vector dm = m1 - m0;
  return 0.5 * ((s1i * s0).trace() + dm.dot(s1i * dm) - static_cast<double>(m0.size()) + logdet(s1) - logdet(s0));
}

/// Symmetric square root of a PSD matrix (negative eigenvalues floored at 0).
inline Matrix sym_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

struct Instance {
  Matrix X, Z;
  Vector y;
  double var = 1.0, noise = 0.1;
  Vector ls;
  bool matern = false;

  Matrix kff() const { return gram(X, X, var, ls, matern); }
  Matrix kuu() const { return gram(Z, Z, var, ls, matern); }
  Matrix kfu() const { return gram(X, Z, var, ls, matern); }
  Matrix qff() const { return kfu() * inv(kuu()) * kfu().transpose(); }
  Matrix dff() const { return kff() - qff(); }
};

inline Instance random_instance(std::mt19937_64& rng, Index n, Index m, Index d = 1, bool matern = false) {
  std::uniform_real_distribution<double> u(-3.0, 3.0), lsd(0.5, 2.0), vd(0.5, 2.0), nd(0.05, 0.5);
  std::normal_distribution<double> g(0.0, 1.0);
  Instance in;
  in.X.resize(n, d);
  in.Z.resize(m, d);
  in.y.resize(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) in.X(i, j) = u(rng);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < d; ++j) in.Z(i, j) = u(rng);
  in.ls.resize(d);
  for (Index j = 0; j < d; ++j) in.ls(j) = lsd(rng);
  in.var = vd(rng);
  in.noise = nd(rng);
  in.matern = matern;
  for (Index i = 0; i < n; ++i) in.y(i) = std::sin(in.X(i, 0)) + 0.3 * g(rng);
  return in;
}

// --- collapsed bounds from dense matrices ---

inline double dense_exact(const Instance& in) {
  const Index n = in.X.rows();
  return log_gauss(in.y, Vector::Zero(n), in.kff() + in.noise * Matrix::Identity(n, n));
}

inline double dense_nystrom_term(const Instance& in) {
  const Index n = in.X.rows();
  return log_gauss(in.y, Vector::Zero(n), in.qff() + in.noise * Matrix::Identity(n, n));
}

inline double dense_f1(const Instance& in) { return dense_nystrom_term(in) - in.dff().trace() / (2.0 * in.noise); }

inline double dense_f3(const Instance& in, const Vector& m) {
  const Vector d = in.dff().diagonal();
  double s = 0.0;
  for (Index i = 0; i < m.size(); ++i) s += -m(i) * d(i) / (2.0 * in.noise) + 0.5 * (1.0 + std::log(m(i)) - m(i));
  return dense_nystrom_term(in) + s;
}

inline double dense_f4(const Instance& in) {
  const Vector d = in.dff().diagonal();
  double s = 0.0;
  for (Index i = 0; i < d.size(); ++i) s += std::log(1.0 + d(i) / in.noise);
  return dense_nystrom_term(in) - 0.5 * s;
}

inline double dense_f5(const Instance& in) {
  const double n = static_cast<double>(in.X.rows());
  return dense_nystrom_term(in) - 0.5 * n * std::log(1.0 + in.dff().trace() / (n * in.noise));
}

inline double dense_f8(const Instance& in) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(in.dff());
  double s = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) s += std::log(1.0 + std::max(es.eigenvalues()(i), 0.0) / in.noise);
  return dense_nystrom_term(in) - 0.5 * s;
}

// --- uncollapsed Gaussian ELBO with per-point marginals ---

inline double gaussian_ell(double y, double mean, double var, double noise) {
  return -0.5 * std::log(2.0 * std::numbers::pi * noise) - ((y - mean) * (y - mean) + var) / (2.0 * noise);
}

/// -KL[q(u)||p(u)] + 1/2 sum(1 + log m - m) + sum E log N(y | f, noise).
inline double dense_svgp_elbo(const Instance& in, const Vector& mu, const Matrix& s, const Vector& m) {
  const Matrix a = in.kfu() * inv(in.kuu());
  const Matrix d = in.dff();
  const Vector mean = a * mu;
  const Matrix as = a * s * a.transpose();
  double ell = 0.0, cond = 0.0;
  for (Index i = 0; i < in.y.size(); ++i) {
    ell += gaussian_ell(in.y(i), mean(i), m(i) * d(i, i) + as(i, i), in.noise);
    cond += 0.5 * (1.0 + std::log(m(i)) - m(i));
  }
  return -gauss_kl(mu, s, Vector::Zero(mu.size()), in.kuu()) + cond + ell;
}

// --- SOLVE-GP from the joint Gaussian over (u, v) ---

struct OrthDense {
  Vector mean;  // joint mean of (u, v)
  Matrix cov;   // joint covariance of (u, v)
  Matrix prior; // K over (u, v)
};

/// q(u) = N(mu_u, S_u); v = K_vu K_uu^{-1} u + w with w ~ N(mu_v, S_v).
inline OrthDense orth_joint(const Matrix& zu, const Matrix& zv, double var, const Vector& ls, const Vector& mu_u,
                            const Matrix& s_u, const Vector& mu_v, const Matrix& s_v) {
  const Index mu = zu.rows(), mv = zv.rows();
  Matrix zall(mu + mv, zu.cols());
  zall << zu, zv;
  OrthDense o;
  o.prior = gram(zall, zall, var, ls);
  const Matrix b = o.prior.block(mu, 0, mv, mu) * inv(o.prior.topLeftCorner(mu, mu));
  o.mean.resize(mu + mv);
  o.mean << mu_u, b * mu_u + mu_v;
  o.cov.resize(mu + mv, mu + mv);
  o.cov.topLeftCorner(mu, mu) = s_u;
  o.cov.topRightCorner(mu, mv) = s_u * b.transpose();
  o.cov.bottomLeftCorner(mv, mu) = b * s_u;
  o.cov.bottomRightCorner(mv, mv) = b * s_u * b.transpose() + s_v;
  return o;
}

/// Brute-force T-SOLVEGP / SOLVEGP Gaussian ELBO with conditional scaling m.
inline double dense_solvegp_elbo(const Matrix& X, const Vector& y, const Matrix& zu, const Matrix& zv, double var,
                                 const Vector& ls, double noise, const Vector& mu_u, const Matrix& s_u,
                                 const Vector& mu_v, const Matrix& s_v, const Vector& m) {
  const OrthDense o = orth_joint(zu, zv, var, ls, mu_u, s_u, mu_v, s_v);
  Matrix zall(zu.rows() + zv.rows(), zu.cols());
  zall << zu, zv;
  const Matrix kfz = gram(X, zall, var, ls);
  const Matrix a = kfz * inv(o.prior);
  const Matrix d = gram(X, X, var, ls) - a * kfz.transpose();
  const Vector mean = a * o.mean;
  const Matrix acov = a * o.cov * a.transpose();
  double ell = 0.0, cond = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    ell += gaussian_ell(y(i), mean(i), m(i) * d(i, i) + acov(i, i), noise);
    cond += 0.5 * (1.0 + std::log(m(i)) - m(i));
  }
  return -gauss_kl(o.mean, o.cov, Vector::Zero(o.mean.size()), o.prior) + cond + ell;
}

// --- predictive distribution by conditioning the joint prior over (u, f, f*) ---

struct DensePrediction {
  Vector mean, var;
};

/// q(u) = N(mu, S), q(f | u) = N(A u, R M R) with R the symmetric root of
/// D_ff; f* follows the prior conditional p(f* | u, f).
inline DensePrediction dense_predict(const Instance& in, const Vector& mu, const Matrix& s, const Vector& m,
                                     const Matrix& xstar) {
  const Index nm = in.Z.rows(), n = in.X.rows();
  Matrix g(nm + n, in.X.cols());
  g << in.Z, in.X;
  const Matrix kg = gram(g, g, in.var, in.ls, in.matern);
  const Matrix a = in.kfu() * inv(in.kuu());
  const Matrix r = sym_sqrt(in.dff());
  Vector qmean(nm + n);
  qmean << mu, a * mu;
  Matrix qcov(nm + n, nm + n);
  qcov.topLeftCorner(nm, nm) = s;
  qcov.topRightCorner(nm, n) = s * a.transpose();
  qcov.bottomLeftCorner(n, nm) = a * s;
  qcov.bottomRightCorner(n, n) = a * s * a.transpose() + r * m.asDiagonal() * r;
  const Matrix ksg = gram(xstar, g, in.var, in.ls, in.matern);
  const Matrix b = ksg * inv(kg);
  const Matrix kss = gram(xstar, xstar, in.var, in.ls, in.matern);
  DensePrediction out;
  out.mean = b * qmean;
  out.var = (kss - b * ksg.transpose() + b * qcov * b.transpose()).diagonal();
  return out;
}

}  // namespace oracle
