#include "sparsegp/likelihoods.hpp"

#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace sparsegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

const GaussHermite& cached_gauss_hermite(int order) {
  thread_local std::map<int, GaussHermite> cache;
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, gauss_hermite(order)).first;
  return it->second;
}

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double sign_of_label(double y) {
  if (y != 0.0 && y != 1.0) throw InputError("Bernoulli observations must be 0 or 1");
  return 2.0 * y - 1.0;
}

void check_var(double var) {
  if (!(var >= 0.0)) throw InputError("expected_loglik: variance must be non-negative");
}

}  // namespace

std::string to_string(LikelihoodKind kind) {
  switch (kind) {
    case LikelihoodKind::Gaussian:
      return "gaussian";
    case LikelihoodKind::Bernoulli:
      return "bernoulli";
    case LikelihoodKind::Categorical:
      return "categorical";
  }
  return "unknown";
}

Eigen::Index Likelihood::latent_dim() const {
  return kind == LikelihoodKind::Categorical ? num_classes : 1;
}

Likelihood Likelihood::gaussian() { return Likelihood{}; }

Likelihood Likelihood::bernoulli(int quadrature_order) {
  Likelihood l;
  l.kind = LikelihoodKind::Bernoulli;
  l.quadrature_order = quadrature_order;
  return l;
}

Likelihood Likelihood::categorical(int num_classes, int mc_samples, std::uint64_t seed) {
  if (num_classes < 2) throw InputError("categorical likelihood needs at least two classes");
  Likelihood l;
  l.kind = LikelihoodKind::Categorical;
  l.num_classes = num_classes;
  l.mc_samples = mc_samples;
  l.seed = seed;
  return l;
}

GaussHermite gauss_hermite(int order) {
  if (order < 1) throw InputError("gauss_hermite: order must be positive");
  // Jacobi matrix of the physicists' Hermite recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(0.5 * i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermite gh;
  gh.nodes = eig.eigenvalues();
  gh.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
  return gh;
}

double expected_loglik(const Likelihood& lik, double mean, double var, double y,
                       double noise_variance) {
  check_var(var);
  switch (lik.kind) {
    case LikelihoodKind::Gaussian: {
      if (!(noise_variance > 0.0)) throw InputError("Gaussian noise variance must be positive");
      const double r = y - mean;
      return -0.5 * (kLog2Pi + std::log(noise_variance)) - (r * r + var) / (2.0 * noise_variance);
    }
    case LikelihoodKind::Bernoulli: {
      const double s = sign_of_label(y);
      const GaussHermite& gh = cached_gauss_hermite(lik.quadrature_order);
      const double scale = std::sqrt(2.0 * var);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
        acc += gh.weights(i) * log_sigmoid(s * (mean + scale * gh.nodes(i)));
      }
      return acc / std::sqrt(std::numbers::pi);
    }
    case LikelihoodKind::Categorical:
      throw InputError("expected_loglik: use expected_loglik_categorical for softmax likelihoods");
  }
  return 0.0;
}

double expected_loglik_categorical(const Likelihood& lik, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& var, int label,
                                   std::uint64_t point_key) {
  if (mean.size() != lik.num_classes || var.size() != lik.num_classes) {
    throw InputError("expected_loglik_categorical: wrong number of classes");
  }
  if (label < 0 || label >= lik.num_classes) throw InputError("class label out of range");
  for (Eigen::Index c = 0; c < var.size(); ++c) check_var(var(c));
  double acc = 0.0;
  Eigen::VectorXd f(mean.size());
  for (int s = 0; s < lik.mc_samples; ++s) {
    for (Eigen::Index c = 0; c < f.size(); ++c) {
      f(c) = mean(c) + std::sqrt(var(c)) * counter_normal(lik.seed, point_key, s, c);
    }
    const double mx = f.maxCoeff();
    acc += f(label) - (mx + std::log((f.array() - mx).exp().sum()));
  }
  return acc / lik.mc_samples;
}

QuadraturePair quadrature_check(double mean, double var, double y, double noise_variance,
                                int order) {
  check_var(var);
  QuadraturePair out;
  out.analytic = expected_loglik(Likelihood::gaussian(), mean, var, y, noise_variance);
  const GaussHermite& gh = cached_gauss_hermite(order);
  const double scale = std::sqrt(2.0 * var);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
    const double r = y - (mean + scale * gh.nodes(i));
    acc += gh.weights(i) * (-0.5 * (kLog2Pi + std::log(noise_variance)) - r * r / (2.0 * noise_variance));
  }
  out.quadrature = acc / std::sqrt(std::numbers::pi);
  return out;
}

namespace ad {

Var gaussian_expected_loglik(Var mean, Var var, const Matrix& y, Var log_noise_variance) {
  Tape& t = mean.tape();
  Var resid = t.constant(y) - mean;
  Var noise = exp(log_noise_variance);
  Var quad = cwise_quotient(square(resid) + var, noise) * 0.5;
  return (-0.5 * (log_noise_variance + kLog2Pi)) - quad;
}

Var bernoulli_expected_loglik(Var mean, Var var, const Matrix& y, int order) {
  if (mean.rows() != y.rows() || mean.cols() != y.cols() || var.rows() != y.rows() ||
      var.cols() != y.cols()) {
    throw InputError("bernoulli_expected_loglik: shape mismatch");
  }
  const GaussHermite& gh = cached_gauss_hermite(order);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  Matrix value(y.rows(), y.cols());
  Matrix d_mean(y.rows(), y.cols());
  Matrix d_var(y.rows(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      const double s = sign_of_label(y(i, j));
      const double v = var.value()(i, j);
      check_var(v);
      const double scale = std::sqrt(2.0 * v);
      double f0 = 0.0, f1 = 0.0, f2 = 0.0;
      for (Index q = 0; q < gh.nodes.size(); ++q) {
        const double z = s * (mean.value()(i, j) + scale * gh.nodes(q));
        const double w = gh.weights(q);
        f0 += w * log_sigmoid(z);
        f1 += w * s * sigmoid(-z);
        f2 += w * -sigmoid(z) * sigmoid(-z);
      }
      value(i, j) = f0 * inv_sqrt_pi;
      d_mean(i, j) = f1 * inv_sqrt_pi;
      // Price's theorem: dE/dvar = E[g''] / 2.
      d_var(i, j) = 0.5 * f2 * inv_sqrt_pi;
    }
  }
  return mean.tape().record(std::move(value), {mean, var},
                            [mean, var, d_mean, d_var](Tape& tape, const Matrix& g, const Matrix&) {
                              tape.accumulate(mean, g.cwiseProduct(d_mean));
                              tape.accumulate(var, g.cwiseProduct(d_var));
                            });
}

Var categorical_expected_loglik(Var mean, Var var, std::span<const int> labels,
                                std::span<const Index> point_keys, int samples,
                                std::uint64_t seed) {
  const Index n = mean.rows();
  const Index classes = mean.cols();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(point_keys.size()) != n) {
    throw InputError("categorical_expected_loglik: label count mismatch");
  }
  Tape& t = mean.tape();
  Matrix onehot = Matrix::Zero(n, classes);
  for (Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw InputError("class label out of range");
    onehot(i, labels[i]) = 1.0;
  }
  Var pick = t.constant(std::move(onehot));
  Var sd = sqrt(var);
  Var total;
  for (int s = 0; s < samples; ++s) {
    Matrix eps(n, classes);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < classes; ++c) {
        eps(i, c) = counter_normal(seed, static_cast<std::uint64_t>(point_keys[i]), s, c);
      }
    }
    Var f = mean + cwise_product(sd, t.constant(std::move(eps)));
    Var ll = row_sums(cwise_product(f, pick)) - logsumexp_rows(f);
    total = total.valid() ? total + ll : ll;
  }
  return total / static_cast<double>(samples);
}

}  // namespace ad

}  // namespace sparsegp
