#include "sparsegp/autodiff.hpp"

#include "sparsegp/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace sparsegp::ad {

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw InputError(std::string("autodiff: incompatible broadcast in ") + op);
}

Matrix broadcast(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1 && m.cols() == cols) return m.replicate(rows, 1);
  if (m.cols() == 1 && m.rows() == rows) return m.replicate(1, cols);
  throw InputError("autodiff: cannot broadcast " + shape(m));
}

// Sums an adjoint back down to the shape of a broadcast operand.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

// Lower triangle with the diagonal halved.
Matrix phi(const Matrix& m) {
  Matrix out = m.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

template <class ValueFn, class DerivFn>
Var unary(Var a, ValueFn value_fn, DerivFn deriv_fn) {
  Tape& t = a.tape();
  Matrix out = a.value().unaryExpr(value_fn);
  return t.record(std::move(out), {a}, [a, deriv_fn](Tape& tape, const Matrix& g, const Matrix&) {
    const Matrix& x = tape.value(a);
    tape.accumulate(a, g.cwiseProduct(x.unaryExpr(deriv_fn)));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw InputError("autodiff: scalar() on a " + shape(v) + " node");
  }
  return v(0, 0);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backprop));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backprop) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id()];
  if (!node.needs_grad) return;
  if (node.adjoint.size() == 0) {
    node.adjoint = g;
  } else {
    node.adjoint += g;
  }
}

void Tape::backward(Var output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw InputError("autodiff: backward() needs a 1x1 output");
  }
  for (Node& n : nodes_) n.adjoint.resize(0, 0);
  accumulate(output, Matrix::Ones(1, 1));
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backprop || node.adjoint.size() == 0) continue;
    // The callback accumulates into inputs only, never into this node.
    node.backprop(*this, node.adjoint, node.value);
  }
}

Matrix Tape::gradient(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.adjoint.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.adjoint;
}

Var operator+(Var a, Var b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "+");
  const Index c = broadcast_dim(a.cols(), b.cols(), "+");
  Matrix out = broadcast(a.value(), r, c) + broadcast(b.value(), r, c);
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    if (t.needs_grad(b)) t.accumulate(b, reduce_to(g, b.rows(), b.cols()));
  });
}

Var operator-(Var a, Var b) { return a + (-b); }

Var operator-(Var a) {
  return a.tape().record(-a.value(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, -g); });
}

Var operator+(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

Var operator+(double s, Var a) { return a + s; }
Var operator-(Var a, double s) { return a + (-s); }
Var operator-(double s, Var a) { return (-a) + s; }

Var operator*(Var a, double s) {
  return a.tape().record(a.value() * s, {a},
                         [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}

Var operator*(double s, Var a) { return a * s; }
Var operator/(Var a, double s) { return a * (1.0 / s); }

Var cwise_product(Var a, Var b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "cwise_product");
  const Index c = broadcast_dim(a.cols(), b.cols(), "cwise_product");
  Matrix out = broadcast(a.value(), r, c).cwiseProduct(broadcast(b.value(), r, c));
  return a.tape().record(std::move(out), {a, b}, [a, b, r, c](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) {
      t.accumulate(a, reduce_to(g.cwiseProduct(broadcast(t.value(b), r, c)), a.rows(), a.cols()));
    }
    if (t.needs_grad(b)) {
      t.accumulate(b, reduce_to(g.cwiseProduct(broadcast(t.value(a), r, c)), b.rows(), b.cols()));
    }
  });
}

Var cwise_quotient(Var a, Var b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "cwise_quotient");
  const Index c = broadcast_dim(a.cols(), b.cols(), "cwise_quotient");
  Matrix out = broadcast(a.value(), r, c).cwiseQuotient(broadcast(b.value(), r, c));
  return a.tape().record(std::move(out), {a, b}, [a, b, r, c](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix bb = broadcast(t.value(b), r, c);
    if (t.needs_grad(a)) t.accumulate(a, reduce_to(g.cwiseQuotient(bb), a.rows(), a.cols()));
    if (t.needs_grad(b)) {
      const Matrix aa = broadcast(t.value(a), r, c);
      Matrix gb = -(g.cwiseProduct(aa)).cwiseQuotient(bb.cwiseProduct(bb));
      t.accumulate(b, reduce_to(gb, b.rows(), b.cols()));
    }
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& self) {
    t.accumulate(a, g.cwiseProduct(self));
  });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var log1p(Var a) {
  return unary(a, [](double x) { return std::log1p(x); }, [](double x) { return 1.0 / (1.0 + x); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}

Var clamp_min(Var a, double lower) {
  return unary(a, [lower](double x) { return x < lower ? lower : x; },
               [lower](double x) { return x < lower ? 0.0 : 1.0; });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw InputError("autodiff: matmul of " + shape(a.value()) + " and " + shape(b.value()));
  }
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var transpose(Var a) {
  return a.tape().record(a.value().transpose(), {a},
                         [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g.transpose()); });
}

Var sum(Var a) {
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a},
                         [a](Tape& t, const Matrix& g, const Matrix&) {
                           t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                         });
}

Var col_sums(Var a) {
  return a.tape().record(a.value().colwise().sum(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(a.rows(), 1));
  });
}

Var row_sums(Var a) {
  return a.tape().record(a.value().rowwise().sum(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var diagonal(Var a) {
  if (a.rows() != a.cols()) throw InputError("autodiff: diagonal of non-square matrix");
  return a.tape().record(a.value().diagonal(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.diagonal() = g.col(0);
    t.accumulate(a, ga);
  });
}

Var block(Var a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw InputError("autodiff: block out of range");
  }
  Matrix out = a.value().block(row, col, rows, cols);
  return a.tape().record(std::move(out), {a}, [a, row, col, rows, cols](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.block(row, col, rows, cols) = g;
    t.accumulate(a, ga);
  });
}

Var gather_rows(Var a, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw InputError("autodiff: gather index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(idx[i]);
  }
  return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, ga);
  });
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("autodiff: hstack of nothing");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw InputError("autodiff: hstack of unequal heights");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [inputs](Tape& t, const Matrix& g, const Matrix&) {
    Index c = 0;
    for (const Var& p : inputs) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var logsumexp_rows(Var a) {
  const Matrix& x = a.value();
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Matrix out = (shifted.array().exp().rowwise().sum().log()).matrix() + mx;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& lse) {
    Matrix soft = (t.value(a).colwise() - lse.col(0)).array().exp();
    t.accumulate(a, soft.array().colwise() * g.col(0).array());
  });
}

Var cholesky(Var a, double jitter) {
  if (a.rows() != a.cols()) throw InputError("autodiff: cholesky of non-square matrix");
  Matrix shifted = a.value();
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  Matrix lower = llt.matrixL();
  if (llt.info() != Eigen::Success || !lower.allFinite()) {
    throw NotPositiveDefinite("cholesky failed", jitter);
  }
  return a.tape().record(std::move(lower), {a}, [a](Tape& tape, const Matrix& g, const Matrix& l) {
    const auto tri = l.triangularView<Eigen::Lower>();
    Matrix p = phi(l.transpose() * Matrix(g.triangularView<Eigen::Lower>()));
    // S = L^{-T} P L^{-1}
    Matrix s = tri.transpose().solve(p);
    s = tri.transpose().solve(s.transpose()).transpose();
    tape.accumulate(a, 0.5 * (s + s.transpose()));
  });
}

Var cholesky_ladder(Var a, std::span<const double> ladder, double* jitter_used) {
  double last = 0.0;
  for (double j : ladder) {
    last = j;
    Matrix shifted = a.value();
    shifted.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success && Matrix(llt.matrixL()).allFinite()) {
      if (jitter_used != nullptr) *jitter_used = j;
      return cholesky(a, j);
    }
  }
  throw NotPositiveDefinite("cholesky failed for every jitter in the ladder", last);
}

Var solve_lower(Var lower, Var b) {
  Matrix x = lower.value().triangularView<Eigen::Lower>().solve(b.value());
  return lower.tape().record(std::move(x), {lower, b}, [lower, b](Tape& tape, const Matrix& g, const Matrix& x_val) {
    const auto tri = tape.value(lower).triangularView<Eigen::Lower>();
    Matrix gb = tri.transpose().solve(g);
    if (tape.needs_grad(lower)) {
      Matrix gl = -(gb * x_val.transpose());
      tape.accumulate(lower, Matrix(gl.triangularView<Eigen::Lower>()));
    }
    if (tape.needs_grad(b)) tape.accumulate(b, gb);
  });
}

Var solve_lower_transposed(Var lower, Var b) {
  Matrix x = lower.value().triangularView<Eigen::Lower>().transpose().solve(b.value());
  return lower.tape().record(std::move(x), {lower, b}, [lower, b](Tape& tape, const Matrix& g, const Matrix& x_val) {
    const auto tri = tape.value(lower).triangularView<Eigen::Lower>();
    Matrix gb = tri.solve(g);
    if (tape.needs_grad(lower)) {
      Matrix gl = -(x_val * gb.transpose());
      tape.accumulate(lower, Matrix(gl.triangularView<Eigen::Lower>()));
    }
    if (tape.needs_grad(b)) tape.accumulate(b, gb);
  });
}

Var sum_log_diagonal(Var lower) {
  const double v = lower.value().diagonal().array().log().sum();
  return lower.tape().record(Matrix::Constant(1, 1, v), {lower}, [lower](Tape& t, const Matrix& g, const Matrix&) {
    Matrix gl = Matrix::Zero(lower.rows(), lower.cols());
    gl.diagonal() = g(0, 0) * t.value(lower).diagonal().cwiseInverse();
    t.accumulate(lower, gl);
  });
}

Var lower_from_packed(Var packed, Index n) {
  if (packed.cols() != 1 || packed.rows() != n * (n + 1) / 2) {
    throw InputError("autodiff: packed triangle has wrong length");
  }
  const Matrix& p = packed.value();
  Matrix out = Matrix::Zero(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i, ++k) out(i, j) = (i == j) ? std::exp(p(k, 0)) : p(k, 0);
  }
  return packed.tape().record(std::move(out), {packed}, [packed, n](Tape& t, const Matrix& g, const Matrix& out) {
    Matrix gp(packed.rows(), 1);
    Index k = 0;
    for (Index j = 0; j < n; ++j) {
      for (Index i = j; i < n; ++i, ++k) gp(k, 0) = (i == j) ? g(i, j) * out(i, i) : g(i, j);
    }
    t.accumulate(packed, gp);
  });
}

}  // namespace sparsegp::ad
