#include "smcvi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smcvi::ad {
namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Single source of truth for forward values; replay() reuses it so stored
// values can be reproduced bit for bit.
double eval_unary(Op op, double x, double aux) {
  switch (op) {
    case Op::AddConst: return x + aux;
    case Op::MulConst: return x * aux;
    case Op::ConstSub: return aux - x;
    case Op::ConstDiv: return aux / x;
    case Op::Neg: return -x;
    case Op::Exp: return std::exp(x);
    case Op::Log: return std::log(x);
    case Op::Sqrt: return std::sqrt(x);
    case Op::Tanh: return std::tanh(x);
    case Op::Sigmoid: return stable_sigmoid(x);
    case Op::Softplus: return stable_softplus(x);
    case Op::Pow: return std::pow(x, aux);
    default: throw UsageError("eval_unary: not a unary op");
  }
}

double eval_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    default: throw UsageError("eval_binary: not a binary op");
  }
}

double eval_lse(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double eval_sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

double eval_dot(std::span<const double> c, std::span<const double> xs) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += c[i] * xs[i];
  return s;
}

void check_domain(Op op, double x, double aux, std::uint32_t node) {
  bool bad = false;
  switch (op) {
    case Op::Log:
    case Op::Sqrt: bad = !(x > 0.0); break;
    case Op::Pow: bad = x < 0.0 && std::floor(aux) != aux; break;
    default: break;
  }
  if (bad) {
    std::ostringstream os;
    os << op_name(op) << " of out-of-domain value " << x << " at node #";
    if (node == Var::kConstant) {
      os << "<constant>";
    } else {
      os << node;
    }
    throw DomainError(os.str(), node);
  }
}

double unary_partial(Op op, double x, double y, double aux) {
  switch (op) {
    case Op::AddConst: return 1.0;
    case Op::MulConst: return aux;
    case Op::ConstSub: return -1.0;
    case Op::ConstDiv: return -aux / (x * x);
    case Op::Neg: return -1.0;
    case Op::Exp: return y;
    case Op::Log: return 1.0 / x;
    case Op::Sqrt: return 0.5 / y;
    case Op::Tanh: return 1.0 - y * y;
    case Op::Sigmoid: return y * (1.0 - y);
    case Op::Softplus: return stable_sigmoid(x);
    case Op::Pow: return aux * std::pow(x, aux - 1.0);
    default: throw UsageError("unary_partial: not a unary op");
  }
}

Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape()) {
    throw UsageError("operands belong to different tapes");
  }
  return a.tape() ? a.tape() : b.tape();
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::AddConst: return "add-const";
    case Op::MulConst: return "mul-const";
    case Op::ConstSub: return "const-sub";
    case Op::ConstDiv: return "const-div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Pow: return "pow";
    case Op::LogSumExp: return "log-sum-exp";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
  }
  return "?";
}

Var& Var::operator+=(const Var& o) { return *this = *this + o; }
Var& Var::operator-=(const Var& o) { return *this = *this - o; }
Var& Var::operator*=(const Var& o) { return *this = *this * o; }
Var& Var::operator/=(const Var& o) { return *this = *this / o; }

Var Tape::parameter(double value) {
  Var v = push(Op::Leaf, value, 0.0, {}, {});
  params_.push_back(v.node());
  return v;
}

void Tape::clear() {
  nodes_.clear();
  parents_.clear();
  partials_.clear();
  params_.clear();
}

void Tape::reserve(std::size_t nodes) {
  nodes_.reserve(nodes);
  parents_.reserve(2 * nodes);
  partials_.reserve(2 * nodes);
}

Var Tape::push(Op op, double value, double aux, std::span<const std::uint32_t> parents,
               std::span<const double> partials) {
  const auto idx = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{value, aux, static_cast<std::uint32_t>(parents_.size()),
                        static_cast<std::uint32_t>(parents.size()), op});
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  return Var(this, idx, value);
}

Var Tape::unary(Op op, const Var& x, double aux) {
  const auto next = x.tape_ ? static_cast<std::uint32_t>(nodes_.size()) : Var::kConstant;
  check_domain(op, x.value_, aux, next);
  const double y = eval_unary(op, x.value_, aux);
  if (x.is_constant()) return Var(y);
  const std::uint32_t parent = x.node_;
  const double d = unary_partial(op, x.value_, y, aux);
  return push(op, y, aux, {&parent, 1}, {&d, 1});
}

Var Tape::binary(Op op, const Var& a, const Var& b) {
  const double y = eval_binary(op, a.value_, b.value_);
  const std::uint32_t ps[2] = {a.node_, b.node_};
  double ds[2];
  switch (op) {
    case Op::Add: ds[0] = 1.0; ds[1] = 1.0; break;
    case Op::Sub: ds[0] = 1.0; ds[1] = -1.0; break;
    case Op::Mul: ds[0] = b.value_; ds[1] = a.value_; break;
    case Op::Div: ds[0] = 1.0 / b.value_; ds[1] = -a.value_ / (b.value_ * b.value_); break;
    default: throw UsageError("binary: not a binary op");
  }
  return push(op, y, 0.0, ps, ds);
}

Var Tape::nary(Op op, std::span<const Var> args, std::span<const double> coeffs) {
  std::vector<double> vals(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) vals[i] = args[i].value_;
  double y = 0.0;
  switch (op) {
    case Op::LogSumExp: y = eval_lse(vals); break;
    case Op::Sum: y = eval_sum(vals); break;
    case Op::Dot: y = eval_dot(coeffs, vals); break;
    default: throw UsageError("nary: not an n-ary op");
  }
  bool any_var = false;
  for (const auto& a : args) {
    if (a.is_constant()) continue;
    if (a.tape_ != this) throw UsageError("n-ary operand belongs to a different tape");
    any_var = true;
  }
  if (!any_var) return Var(y);
  std::vector<std::uint32_t> ps(args.size());
  std::vector<double> ds(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) {
    // Constant operands become non-parameter leaves so replay sees every input.
    ps[i] = args[i].is_constant() ? push(Op::Leaf, vals[i], 0.0, {}, {}).node_ : args[i].node_;
    if (op == Op::LogSumExp) {
      ds[i] = std::isfinite(y) ? std::exp(vals[i] - y) : 0.0;
    } else if (op == Op::Dot) {
      ds[i] = coeffs[i];
    } else {
      ds[i] = 1.0;
    }
  }
  return push(op, y, 0.0, ps, ds);
}

std::span<const std::uint32_t> Tape::parents_of(std::uint32_t node) const {
  const Node& n = nodes_.at(node);
  return {parents_.data() + n.edge_begin, n.edge_count};
}

std::vector<double> Tape::adjoints(const Var& output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  backward(output, adj);
  return adj;
}

void Tape::backward(const Var& output, std::vector<double>& adj) const {
  adj.assign(nodes_.size(), 0.0);
  if (output.is_constant()) return;
  if (output.tape() != this) throw UsageError("backward: output is not on this tape");
  adj[output.node()] = 1.0;
  for (std::size_t i = output.node() + 1; i-- > 0;) {
    const double a = adj[i];
    if (a == 0.0) continue;
    const Node& n = nodes_[i];
    for (std::uint32_t e = n.edge_begin; e < n.edge_begin + n.edge_count; ++e) {
      adj[parents_[e]] += a * partials_[e];
    }
  }
}

std::vector<double> Tape::gradient(const Var& output) const {
  backward(output, scratch_);
  std::vector<double> g(params_.size(), 0.0);
  for (std::size_t i = 0; i < params_.size(); ++i) g[i] = scratch_[params_[i]];
  return g;
}

std::size_t Tape::replay() const {
  std::vector<double> vals;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    vals.clear();
    for (std::uint32_t e = n.edge_begin; e < n.edge_begin + n.edge_count; ++e) {
      vals.push_back(nodes_[parents_[e]].value);
    }
    double y = 0.0;
    switch (n.op) {
      case Op::Leaf: y = n.value; break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: y = eval_binary(n.op, vals[0], vals[1]); break;
      case Op::LogSumExp: y = eval_lse(vals); break;
      case Op::Sum: y = eval_sum(vals); break;
      case Op::Dot:
        y = eval_dot(std::span<const double>(partials_.data() + n.edge_begin, n.edge_count), vals);
        break;
      default: y = eval_unary(n.op, vals[0], n.aux); break;
    }
    if (!(y == n.value || (std::isnan(y) && std::isnan(n.value)))) return i;
  }
  return nodes_.size();
}

bool Tape::topologically_ordered() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (auto p : parents_of(static_cast<std::uint32_t>(i))) {
      if (p >= i) return false;
    }
  }
  return true;
}

Var operator+(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.value() + b.value());
  if (a.is_constant()) return t->unary(Op::AddConst, b, a.value());
  if (b.is_constant()) return t->unary(Op::AddConst, a, b.value());
  return t->binary(Op::Add, a, b);
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.value() - b.value());
  if (a.is_constant()) return t->unary(Op::ConstSub, b, a.value());
  if (b.is_constant()) return t->unary(Op::AddConst, a, -b.value());
  return t->binary(Op::Sub, a, b);
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.value() * b.value());
  if (a.is_constant()) return t->unary(Op::MulConst, b, a.value());
  if (b.is_constant()) return t->unary(Op::MulConst, a, b.value());
  return t->binary(Op::Mul, a, b);
}

Var operator/(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.value() / b.value());
  if (a.is_constant()) return t->unary(Op::ConstDiv, b, a.value());
  if (b.is_constant()) return t->unary(Op::MulConst, a, 1.0 / b.value());
  return t->binary(Op::Div, a, b);
}

Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value());
  return a.tape()->unary(Op::Neg, a);
}

namespace {
Var apply_unary(Op op, const Var& x, double aux = 0.0) {
  if (x.is_constant()) {
    check_domain(op, x.value(), aux, Var::kConstant);
    return Var(eval_unary(op, x.value(), aux));
  }
  return x.tape()->unary(op, x, aux);
}

Tape* tape_of(std::span<const Var> xs) {
  Tape* t = nullptr;
  for (const auto& x : xs) {
    if (!x.tape()) continue;
    if (t && x.tape() != t) throw UsageError("operands belong to different tapes");
    t = x.tape();
  }
  return t;
}
}  // namespace

Var exp(const Var& x) { return apply_unary(Op::Exp, x); }
Var log(const Var& x) { return apply_unary(Op::Log, x); }
Var sqrt(const Var& x) { return apply_unary(Op::Sqrt, x); }
Var tanh(const Var& x) { return apply_unary(Op::Tanh, x); }
Var sigmoid(const Var& x) { return apply_unary(Op::Sigmoid, x); }
Var softplus(const Var& x) { return apply_unary(Op::Softplus, x); }
Var pow(const Var& x, double exponent) { return apply_unary(Op::Pow, x, exponent); }
Var square(const Var& x) { return x * x; }

Var log_sum_exp(std::span<const Var> xs) {
  Tape* t = tape_of(xs);
  if (!t) {
    std::vector<double> v(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) v[i] = xs[i].value();
    return Var(eval_lse(v));
  }
  return t->nary(Op::LogSumExp, xs);
}

Var sum(std::span<const Var> xs) {
  Tape* t = tape_of(xs);
  if (!t) {
    std::vector<double> v(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) v[i] = xs[i].value();
    return Var(eval_sum(v));
  }
  return t->nary(Op::Sum, xs);
}

Var dot(std::span<const double> coeffs, std::span<const Var> xs) {
  if (coeffs.size() != xs.size()) throw UsageError("dot: size mismatch");
  Tape* t = tape_of(xs);
  if (!t) {
    std::vector<double> v(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) v[i] = xs[i].value();
    return Var(eval_dot(coeffs, v));
  }
  return t->nary(Op::Dot, xs, coeffs);
}

}  // namespace smcvi::ad
