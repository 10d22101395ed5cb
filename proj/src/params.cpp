#include "sparsegp/params.hpp"

#include "sparsegp/errors.hpp"

namespace sparsegp {

void ParamVector::add(const std::string& name, const Eigen::MatrixXd& value) {
  if (has(name)) throw InputError("parameter block '" + name + "' already exists");
  ParamBlock b{name, value.rows(), value.cols(), values_.size()};
  Eigen::VectorXd grown(values_.size() + b.size());
  grown.head(values_.size()) = values_;
  grown.tail(b.size()) = value.reshaped();
  values_ = std::move(grown);
  blocks_.push_back(std::move(b));
}

bool ParamVector::has(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return true;
  return false;
}

const ParamBlock& ParamVector::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw InputError("no parameter block named '" + name + "'");
}

Eigen::MatrixXd ParamVector::get(const std::string& name) const {
  const ParamBlock& b = block(name);
  return values_.segment(b.offset, b.size()).reshaped(b.rows, b.cols);
}

void ParamVector::set(const std::string& name, const Eigen::MatrixXd& value) {
  const ParamBlock& b = block(name);
  if (value.rows() != b.rows || value.cols() != b.cols) {
    throw InputError("parameter block '" + name + "' has a different shape");
  }
  values_.segment(b.offset, b.size()) = value.reshaped();
}

double ParamVector::scalar(const std::string& name) const {
  const ParamBlock& b = block(name);
  if (b.size() != 1) throw InputError("parameter block '" + name + "' is not a scalar");
  return values_(b.offset);
}

const std::string& ParamVector::name_at(Eigen::Index i) const {
  for (const auto& b : blocks_)
    if (i >= b.offset && i < b.offset + b.size()) return b.name;
  throw InputError("flat parameter index out of range");
}

ParamVector ParamVector::with_values(const Eigen::VectorXd& v) const {
  if (v.size() != values_.size()) throw InputError("parameter vector has the wrong length");
  ParamVector out = *this;
  out.values_ = v;
  return out;
}

Bindings bind(ad::Tape& tape, const ParamVector& p, bool as_constants) {
  Bindings out;
  for (const auto& b : p.manifest()) {
    out.emplace(b.name, as_constants ? tape.constant(p.get(b.name)) : tape.variable(p.get(b.name)));
  }
  return out;
}

double BoundValue::term(const std::string& name) const {
  auto it = terms.find(name);
  return it == terms.end() ? 0.0 : it->second;
}

double BoundValue::term_sum() const {
  double s = 0.0;
  for (const auto& [name, v] : terms) s += v;
  return s;
}

BoundValue evaluate(const Objective& obj, const ParamVector& params, const EvalContext& ctx) {
  ad::Tape tape;
  Bindings b = bind(tape, params, true);
  TermMap terms;
  ad::Var total = obj.build(tape, b, ctx, &terms);
  BoundValue out;
  out.total = total.scalar();
  for (const auto& [name, v] : terms) out.terms[name] = v.scalar();
  return out;
}

}  // namespace sparsegp
