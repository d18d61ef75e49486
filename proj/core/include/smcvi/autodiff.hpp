#pragma once

// Reverse-mode differentiation over a dynamically recorded tape of scalar
// nodes. A Tape is rebuilt for every objective evaluation: SMC ancestry is
// data dependent, so the graph topology changes from one evaluation to the
// next.
//
// Values that do not depend on any tape leaf are represented by constant
// Vars (no tape, no node). Arithmetic on constants stays constant and never
// touches a tape.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smcvi::ad {

class Tape;

/// Thrown for log/sqrt/pow of a value outside the function's domain.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::uint32_t node)
      : std::domain_error(what), node_(node) {}
  /// Index the offending node would have received on its tape.
  std::uint32_t node() const noexcept { return node_; }

 private:
  std::uint32_t node_;
};

/// Thrown when operands from different tapes are combined, or a gradient is
/// requested for an output that lives on another tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  AddConst,
  MulConst,
  ConstSub,
  ConstDiv,
  Neg,
  Exp,
  Log,
  Sqrt,
  Tanh,
  Sigmoid,
  Softplus,
  Pow,
  LogSumExp,
  Sum,
  Dot,
};

const char* op_name(Op op) noexcept;

class Var {
 public:
  static constexpr std::uint32_t kConstant = std::numeric_limits<std::uint32_t>::max();

  Var() noexcept = default;
  Var(double v) noexcept : value_(v) {}  // NOLINT: constants convert implicitly

  double value() const noexcept { return value_; }
  bool is_constant() const noexcept { return tape_ == nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t node() const noexcept { return node_; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);

 private:
  friend class Tape;
  Var(Tape* t, std::uint32_t n, double v) noexcept : tape_(t), node_(n), value_(v) {}

  Tape* tape_ = nullptr;
  std::uint32_t node_ = kConstant;
  double value_ = 0.0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Declares a differentiable leaf. Gradients returned by gradient() are
  /// ordered by declaration.
  Var parameter(double value);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t num_parameters() const noexcept { return params_.size(); }
  /// Drops every node but keeps the allocated capacity.
  void clear();
  void reserve(std::size_t nodes);

  /// Adjoints of every node with respect to `output`. Constant outputs give
  /// all zeros.
  std::vector<double> adjoints(const Var& output) const;

  /// d output / d parameter for every declared parameter.
  std::vector<double> gradient(const Var& output) const;

  /// Recomputes every node value from its parents and compares bitwise to
  /// the stored value. Returns the index of the first mismatch, or size().
  std::size_t replay() const;

  /// Topological order holds if every parent index is smaller than its child.
  bool topologically_ordered() const;

  double value_of(std::uint32_t node) const { return nodes_.at(node).value; }
  Op op_of(std::uint32_t node) const { return nodes_.at(node).op; }
  std::span<const std::uint32_t> parents_of(std::uint32_t node) const;

  // Recording primitives. Prefer the free functions below.
  Var unary(Op op, const Var& x, double aux = 0.0);
  Var binary(Op op, const Var& a, const Var& b);
  Var nary(Op op, std::span<const Var> args, std::span<const double> coeffs = {});

 private:
  struct Node {
    double value;
    double aux;
    std::uint32_t edge_begin;
    std::uint32_t edge_count;
    Op op;
  };

  Var push(Op op, double value, double aux, std::span<const std::uint32_t> parents,
           std::span<const double> partials);
  void backward(const Var& output, std::vector<double>& adj) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
  std::vector<std::uint32_t> params_;
  // Adjoint buffer reused by gradient(); keeps its capacity across calls.
  mutable std::vector<double> scratch_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var operator+(const Var& a) { return a; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var pow(const Var& x, double exponent);
Var square(const Var& x);
Var log_sum_exp(std::span<const Var> xs);
Var sum(std::span<const Var> xs);
/// Σ coeffs[i]·xs[i] with constant coefficients, recorded as one node.
Var dot(std::span<const double> coeffs, std::span<const Var> xs);

/// Same value, severed from the tape.
inline Var stop_gradient(const Var& x) { return Var(x.value()); }

inline double value(const Var& x) { return x.value(); }
inline bool isfinite(const Var& x) { return std::isfinite(x.value()); }

}  // namespace smcvi::ad
