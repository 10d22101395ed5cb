#pragma once

#include "sparsegp/kernels.hpp"
#include "sparsegp/params.hpp"
#include "sparsegp/variational.hpp"

#include <optional>
#include <string>

namespace sparsegp {

enum class CollapsedKind { Exact, F1_Titsias, F3_GivenM, F4_Tight, F5_LogSum, F8_GeneralC, F9_SharedM };

std::string to_string(CollapsedKind kind);
CollapsedKind collapsed_kind_from_string(const std::string& name);

struct BoundOptions {
  /// Largest N for which F8 may build and diagonalize the dense D_ff.
  Index oracle_cap = 2000;
};

/// log N(y; 0, K_ff + sigma^2 I) by dense Cholesky.
BoundValue exact_lml(const Hyperparams& h, const Matrix& X, const Vector& y);

/// Collapsed Gaussian-likelihood bound of the given kind. `m` is required
/// for (and only used by) F3_GivenM.
BoundValue collapsed_bound(CollapsedKind kind, const Hyperparams& h, const Matrix& Z,
                           const Matrix& X, const Vector& y,
                           const std::optional<Vector>& m = std::nullopt,
                           const BoundOptions& opts = {});

/// m_n = sigma^2 / (d_n + sigma^2).
Vector optimal_m(const Hyperparams& h, const CovBundle& bundle);

/// Optimal q(u) for Gaussian regression.
VariationalGaussian optimal_qu(const Hyperparams& h, const Matrix& Z, const Matrix& X,
                               const Vector& y);

/// Trainable collapsed objective. Parameters: the kernel and noise blocks,
/// inducing.Z (except for Exact) and scaling.log_m (N x 1, F3 only).
class CollapsedObjective : public Objective {
 public:
  CollapsedObjective(CollapsedKind kind, Matrix X, Vector y, KernelFamily family,
                     BoundOptions opts = {});

  std::string id() const override;
  Index num_data() const override { return X_.rows(); }
  ad::Var build(ad::Tape& tape, const Bindings& params, const EvalContext& ctx,
                TermMap* terms) const override;
  bool differentiable() const override { return kind_ != CollapsedKind::F8_GeneralC; }

  CollapsedKind kind() const { return kind_; }

 private:
  CollapsedKind kind_;
  Matrix X_;
  Vector y_;
  KernelFamily family_;
  BoundOptions opts_;
};

/// Parameters for CollapsedObjective.
ParamVector pack_collapsed(CollapsedKind kind, const Hyperparams& h, const Matrix& Z,
                           const std::optional<Vector>& m = std::nullopt);

}  // namespace sparsegp
