#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Tape records one node per matrix operation. Every node keeps its forward
// value and, after Tape::backward, the adjoint of the scalar output with
// respect to that value. Nodes built only from constants never receive
// adjoints, so data matrices cost nothing on the backward pass.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace sparsegp::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  double scalar() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during the backward sweep with the adjoint and the forward value
  /// of the node itself.
  using Backprop = std::function<void(Tape&, const Matrix& adjoint, const Matrix& value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var constant(Matrix value);
  Var constant(double value);

  /// Appends a node that depends on `inputs`. `backprop` is dropped when no
  /// input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);
  Var record(Matrix value, std::span<const Var> inputs, Backprop backprop);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Adds `g` to the adjoint of `v` (no-op for constants).
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(output)/d(output) = 1 and sweeps every node in reverse order.
  void backward(Var output);

  /// Adjoint of `v` after backward(); zeros if nothing flowed into it.
  Matrix gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    Backprop backprop;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise arithmetic. Operands broadcast along any dimension of size 1.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double s);
Var operator+(double s, Var a);
Var operator-(Var a, double s);
Var operator-(double s, Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator/(Var a, double s);
Var cwise_product(Var a, Var b);
Var cwise_quotient(Var a, Var b);

Var exp(Var a);
Var log(Var a);
Var log1p(Var a);
Var square(Var a);
Var sqrt(Var a);
/// max(a, lower) elementwise; zero derivative where clamped.
Var clamp_min(Var a, double lower);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var sum(Var a);
/// 1 x cols row of column sums.
Var col_sums(Var a);
/// rows x 1 column of row sums.
Var row_sums(Var a);
/// Diagonal of a square matrix as a column.
Var diagonal(Var a);
Var block(Var a, Index row, Index col, Index rows, Index cols);
Var gather_rows(Var a, std::span<const Index> rows);
/// Concatenates equally tall operands left to right.
Var hstack(std::span<const Var> parts);
/// Row-wise log-sum-exp, rows x 1.
Var logsumexp_rows(Var a);

/// Lower Cholesky factor of (a + jitter I); reads only the lower triangle
/// of `a` but distributes the adjoint symmetrically.
Var cholesky(Var a, double jitter = 0.0);
/// Cholesky with the first jitter from an ascending ladder that succeeds.
/// Ladder entries are absolute. Throws NotPositiveDefinite otherwise.
Var cholesky_ladder(Var a, std::span<const double> ladder, double* jitter_used = nullptr);
/// L^{-1} b for lower-triangular L.
Var solve_lower(Var lower, Var b);
/// L^{-T} b for lower-triangular L.
Var solve_lower_transposed(Var lower, Var b);
/// sum_i log L_ii.
Var sum_log_diagonal(Var lower);
/// Builds a lower-triangular n x n matrix from n(n+1)/2 packed column-major
/// entries of `packed` (a column), exponentiating the diagonal.
Var lower_from_packed(Var packed, Index n);

}  // namespace sparsegp::ad
