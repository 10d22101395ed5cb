#include "sparsegp/bounds.hpp"

#include "sparsegp/errors.hpp"

#include <cmath>
#include <numbers>

namespace sparsegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// -0.5 * sum log(1 + lambda_n / sigma^2) over the eigenvalues of the dense
// D_ff = K_ff - K_fu K_uu^{-1} K_uf.
double general_c_term(const Hyperparams& h, const Matrix& Z, const Matrix& X) {
  const Matrix kff = kernel_eval(h.kernel, X, X);
  const CovBundle b = build_bundle(h, Z, X);
  const Matrix a = b.kuu_chol.triangularView<Eigen::Lower>().solve(b.kfu.transpose());
  Matrix dff = kff - a.transpose() * a;
  dff = 0.5 * (dff + dff.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(dff, Eigen::EigenvaluesOnly);
  const double s2 = h.noise_variance();
  return -0.5 * eig.eigenvalues().cwiseMax(0.0).unaryExpr([s2](double l) { return std::log1p(l / s2); }).sum();
}

}  // namespace

std::string to_string(CollapsedKind kind) {
  switch (kind) {
    case CollapsedKind::Exact:
      return "exact";
    case CollapsedKind::F1_Titsias:
      return "F1";
    case CollapsedKind::F3_GivenM:
      return "F3";
    case CollapsedKind::F4_Tight:
      return "F4";
    case CollapsedKind::F5_LogSum:
      return "F5";
    case CollapsedKind::F8_GeneralC:
      return "F8";
    case CollapsedKind::F9_SharedM:
      return "F9";
  }
  return "unknown";
}

CollapsedKind collapsed_kind_from_string(const std::string& name) {
  for (CollapsedKind k : {CollapsedKind::Exact, CollapsedKind::F1_Titsias, CollapsedKind::F3_GivenM,
                          CollapsedKind::F4_Tight, CollapsedKind::F5_LogSum,
                          CollapsedKind::F8_GeneralC, CollapsedKind::F9_SharedM}) {
    if (to_string(k) == name) return k;
  }
  if (name == "sgpr") return CollapsedKind::F1_Titsias;
  if (name == "t-sgpr") return CollapsedKind::F4_Tight;
  throw InputError("unknown collapsed bound '" + name + "'");
}

CollapsedObjective::CollapsedObjective(CollapsedKind kind, Matrix X, Vector y, KernelFamily family,
                                       BoundOptions opts)
    : kind_(kind), X_(std::move(X)), y_(std::move(y)), family_(family), opts_(opts) {
  if (X_.rows() < 1) throw InputError("collapsed bound: no data");
  if (X_.rows() != y_.size()) throw InputError("collapsed bound: X and y row counts differ");
}

std::string CollapsedObjective::id() const {
  switch (kind_) {
    case CollapsedKind::F1_Titsias:
      return "sgpr";
    case CollapsedKind::F4_Tight:
      return "t-sgpr";
    default:
      return to_string(kind_);
  }
}

ad::Var CollapsedObjective::build(ad::Tape& tape, const Bindings& b, const EvalContext&,
                                  TermMap* terms) const {
  using namespace ad;
  const Index n = X_.rows();
  const double nd = static_cast<double>(n);
  const KernelVars kv = kernel_vars(b, family_);
  Var log_noise = b.at(kLogNoise);
  Var inv_s2 = exp(-log_noise);
  Var x = tape.constant(X_);
  Var y = tape.constant(Matrix(y_));
  TermMap local;
  local["const"] = tape.constant(-0.5 * nd * kLog2Pi);

  if (kind_ == CollapsedKind::Exact) {
    Var k = kernel_matrix(kv, x, x) + cwise_product(exp(log_noise), tape.constant(Matrix(Matrix::Identity(n, n))));
    double jitter = 0.0;
    Var l = cholesky_ladder(k, scaled_ladder(k.value()), &jitter);
    local["quad"] = -0.5 * sum(square(solve_lower(l, y)));
    local["logdet"] = -sum_log_diagonal(l);
  } else {
    Var Z = b.at(kInducing);
    const InducingConditional ic = inducing_conditional(kv, Z, x);
    const Index m = Z.rows();
    Var inv_s = exp(-0.5 * log_noise);
    Var as = cwise_product(ic.proj, inv_s);
    Var bmat = matmul(as, transpose(as)) + tape.constant(Matrix(Matrix::Identity(m, m)));
    Var lb = cholesky(bmat);
    Var c = cwise_product(solve_lower(lb, matmul(as, y)), inv_s);
    local["quad"] = -0.5 * (cwise_product(inv_s2, tape.constant(y_.squaredNorm())) - sum(square(c)));
    local["logdet"] = -0.5 * (nd * log_noise + 2.0 * sum_log_diagonal(lb));

    switch (kind_) {
      case CollapsedKind::F1_Titsias:
        local["trace_or_scaling"] = -0.5 * cwise_product(sum(ic.d), inv_s2);
        break;
      case CollapsedKind::F3_GivenM: {
        if (!b.contains(kLogM)) throw InputError("F3 needs the scaling vector m");
        Var log_m = b.at(kLogM);
        if (log_m.rows() != n) throw InputError("F3: m must have one entry per data point");
        Var mv = exp(log_m);
        local["trace_or_scaling"] = -0.5 * cwise_product(sum(cwise_product(mv, ic.d)), inv_s2);
        local["kl_conditional"] = 0.5 * sum((log_m + 1.0) - mv);
        break;
      }
      case CollapsedKind::F4_Tight:
        local["trace_or_scaling"] = -0.5 * sum(log1p(cwise_product(ic.d, inv_s2)));
        break;
      case CollapsedKind::F5_LogSum: {
        // trace(D_ff) straight from the Gram quantities.
        Var trace = sum(ic.kff_diag) - sum(square(ic.proj));
        local["trace_or_scaling"] = -0.5 * nd * log1p(cwise_product(trace, inv_s2) / nd);
        break;
      }
      case CollapsedKind::F9_SharedM: {
        // Shared m = sigma^2 / (mean(d) + sigma^2) inside the F3 form.
        Var sum_d = sum(ic.d);
        Var s2 = exp(log_noise);
        Var denom = sum_d / nd + s2;
        Var mv = cwise_quotient(s2, denom);
        local["trace_or_scaling"] = -0.5 * cwise_product(cwise_product(mv, sum_d), inv_s2);
        local["kl_conditional"] = 0.5 * nd * ((log_noise - log(denom) + 1.0) - mv);
        break;
      }
      case CollapsedKind::F8_GeneralC: {
        if (n > opts_.oracle_cap) {
          throw CapabilityError("F8 needs a dense N x N eigendecomposition; N = " + std::to_string(n) +
                                " exceeds the oracle cap " + std::to_string(opts_.oracle_cap));
        }
        Hyperparams h;
        h.kernel = Kernel{family_, kv.log_variance.scalar(), kv.log_lengthscales.value().col(0)};
        h.log_noise_variance = log_noise.scalar();
        local["trace_or_scaling"] = tape.constant(general_c_term(h, Z.value(), X_));
        break;
      }
      case CollapsedKind::Exact:
        break;
    }
  }

  Var total;
  for (const auto& [name, v] : local) total = total.valid() ? total + v : v;
  if (terms) *terms = local;
  return total;
}

ParamVector pack_collapsed(CollapsedKind kind, const Hyperparams& h, const Matrix& Z,
                           const std::optional<Vector>& m) {
  ParamVector p;
  add_hyperparams(p, h);
  if (kind != CollapsedKind::Exact) p.add(kInducing, Z);
  if (kind == CollapsedKind::F3_GivenM) {
    if (!m) throw InputError("F3 needs the scaling vector m");
    if ((m->array() <= 0.0).any() || !m->allFinite()) throw InputError("F3: m must be positive");
    p.add(kLogM, m->array().log().matrix());
  }
  return p;
}

BoundValue exact_lml(const Hyperparams& h, const Matrix& X, const Vector& y) {
  CollapsedObjective obj(CollapsedKind::Exact, X, y, h.kernel.family);
  return evaluate(obj, pack_collapsed(CollapsedKind::Exact, h, Matrix()));
}

BoundValue collapsed_bound(CollapsedKind kind, const Hyperparams& h, const Matrix& Z,
                           const Matrix& X, const Vector& y, const std::optional<Vector>& m,
                           const BoundOptions& opts) {
  if (kind == CollapsedKind::F3_GivenM) {
    if (!m) throw InputError("F3 needs the scaling vector m");
    if (m->size() != X.rows()) throw InputError("F3: m must have one entry per data point");
  }
  CollapsedObjective obj(kind, X, y, h.kernel.family, opts);
  return evaluate(obj, pack_collapsed(kind, h, Z, kind == CollapsedKind::F3_GivenM ? m : std::nullopt));
}

Vector optimal_m(const Hyperparams& h, const CovBundle& bundle) {
  const double s2 = h.noise_variance();
  return (s2 / (bundle.d.array() + s2)).matrix();
}

VariationalGaussian optimal_qu(const Hyperparams& h, const Matrix& Z, const Matrix& X,
                               const Vector& y) {
  if (X.rows() != y.size()) throw InputError("optimal_qu: X and y row counts differ");
  const CovBundle b = build_bundle(h, Z, X);
  const Index m = Z.rows();
  const double s = std::sqrt(h.noise_variance());
  const auto l = b.kuu_chol.triangularView<Eigen::Lower>();
  const Matrix as = l.solve(b.kfu.transpose()) / s;
  const Matrix bmat = Matrix::Identity(m, m) + as * as.transpose();
  Eigen::LLT<Matrix> llt(bmat);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("optimal_qu: B is not positive definite", 0.0);
  const Matrix lb = llt.matrixL();
  const Vector c = lb.triangularView<Eigen::Lower>().solve(as * y) / s;

  // S = L B^{-1} L^T = W W^T with W = L LB^{-T}.
  const Matrix w = lb.triangularView<Eigen::Lower>().solve(Matrix(b.kuu_chol.transpose())).transpose();
  Matrix cov = w * w.transpose();
  cov = 0.5 * (cov + cov.transpose());
  VariationalGaussian q;
  q.mean = b.kuu_chol * lb.transpose().triangularView<Eigen::Upper>().solve(c);
  q.cov_factor = cholesky_jitter(cov, scaled_ladder(cov)).lower;
  return q;
}

}  // namespace sparsegp
