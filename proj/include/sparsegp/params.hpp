#pragma once

// Named, shaped parameter blocks flattened into one vector for optimizers,
// plus the Objective interface every trainable model implements.

#include "sparsegp/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sparsegp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct ParamBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Flat vector of unconstrained trainables with a name/shape manifest.
/// Blocks are stored column-major in insertion order.
class ParamVector {
 public:
  void add(const std::string& name, const Eigen::MatrixXd& value);
  bool has(const std::string& name) const;
  const ParamBlock& block(const std::string& name) const;
  Eigen::MatrixXd get(const std::string& name) const;
  void set(const std::string& name, const Eigen::MatrixXd& value);
  double scalar(const std::string& name) const;

  const std::vector<ParamBlock>& manifest() const { return blocks_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  /// Name of the block holding flat index i.
  const std::string& name_at(Eigen::Index i) const;

  /// Same manifest, different values. Throws on size mismatch.
  ParamVector with_values(const Eigen::VectorXd& v) const;

 private:
  std::vector<ParamBlock> blocks_;
  Eigen::VectorXd values_;
};

using Bindings = std::map<std::string, ad::Var>;
using TermMap = std::map<std::string, ad::Var>;

/// Records every block of `p` on the tape, as variables or as constants.
Bindings bind(ad::Tape& tape, const ParamVector& p, bool as_constants = false);

/// Which data rows an evaluation sees and which optimizer step it is (used
/// to key Monte Carlo noise).
struct EvalContext {
  std::span<const Eigen::Index> batch;  // empty = all rows
  std::uint64_t step = 0;
};

class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string id() const = 0;
  /// Number of data rows; mini-batches index into [0, num_data()).
  virtual Eigen::Index num_data() const = 0;
  /// Scalar objective to maximize. When `terms` is non-null it receives the
  /// named contributions, which sum to the returned node.
  virtual ad::Var build(ad::Tape& tape, const Bindings& params, const EvalContext& ctx,
                        TermMap* terms) const = 0;
  /// False for objectives whose value is a constant on the tape (F8).
  virtual bool differentiable() const { return true; }
};

/// Objective value with its named contributions (const, quad, logdet,
/// trace_or_scaling, kl_u, kl_conditional, ell, ...).
struct BoundValue {
  double total = 0.0;
  std::map<std::string, double> terms;

  double term(const std::string& name) const;
  double term_sum() const;
};

BoundValue evaluate(const Objective& obj, const ParamVector& params, const EvalContext& ctx = {});

}  // namespace sparsegp
