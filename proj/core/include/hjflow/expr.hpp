#pragma once

// Small symbolic expression language: parse, print, differentiate,
// substitute, evaluate, randomized zero testing and Poisson brackets.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hjflow {

enum class Op { Number, Symbol, Add, Sub, Mul, Div, Neg, Pow, Call };

/// Immutable expression tree with shared structure. Copies are cheap.
class Expr {
 public:
  /// The literal 0.
  Expr();

  static Expr number(double value);
  static Expr symbol(std::string name);
  static Expr call(std::string name, std::vector<Expr> args);
  /// Raw node constructors; no folding.
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr negate(Expr operand);

  Op op() const;
  /// Literal value; only meaningful for Op::Number.
  double value() const;
  /// Symbol or function name.
  const std::string& name() const;
  std::span<const Expr> args() const;

  bool is_number() const { return op() == Op::Number; }
  bool is_number(double v) const { return is_number() && value() == v; }

  /// Text form that parse() reads back into an equivalent tree.
  std::string str() const;

  friend bool same_node(const Expr& a, const Expr& b) {
    return a.node_ == b.node_;
  }

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

// Folding constructors: combine literal-only operands and drop additive
// and multiplicative identities. Everything derived in the library goes
// through these.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);

/// Re-apply the folding constructors bottom-up.
Expr fold(const Expr& e);

/// Parses the grammar
///   expr  := term (('+'|'-') term)*
///   term  := unary (('*'|'/') unary)*
///   unary := '-' unary | power
///   power := atom ('^' unary)?
///   atom  := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
/// Throws ParseError with a 1-based column.
Expr parse(std::string_view text);

bool is_builtin_function(std::string_view name);

std::set<std::string> free_symbols(const Expr& e);
/// Names of calls that are not built-in functions.
std::set<std::string> user_calls(const Expr& e);
bool depends_on(const Expr& e, std::string_view symbol);

/// d e / d var. Only sin, cos, exp and sqrt are differentiable; powers
/// must have exponents independent of `var`.
Expr differentiate(const Expr& e, std::string_view var);

struct Definition {
  std::vector<std::string> params;
  Expr body;
};
using Definitions = std::map<std::string, Definition, std::less<>>;

/// Expands every symbol or call whose name is defined, repeatedly, until no
/// defined name remains. Throws SubstitutionError on arity mismatch or when
/// `max_depth` rounds do not reach a fixpoint (cyclic definitions).
Expr substitute(const Expr& e, const Definitions& defs, int max_depth = 64);

/// One-shot replacement of symbols (no recursion into replacements).
Expr replace_symbols(const Expr& e, const std::map<std::string, Expr, std::less<>>& with);

using Bindings = std::map<std::string, double, std::less<>>;

/// Throws EvalError on a missing binding, division by zero, sqrt of a
/// negative value, or a call to an unknown function.
double evaluate(const Expr& e, const Bindings& b);

std::string format_bindings(const Bindings& b);

/// Sampling interval for one symbol; values with |x| < exclude_abs_below
/// are never drawn.
struct Interval {
  double lo = -1.0;
  double hi = 1.0;
  double exclude_abs_below = 0.0;
};
using SamplingDomain = std::map<std::string, Interval, std::less<>>;

/// Draws one value per symbol of a SamplingDomain, deterministically for a
/// given seed.
class Sampler {
 public:
  Sampler(const SamplingDomain& domain, std::uint64_t seed);
  Bindings next();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

struct ZeroTestOptions {
  int samples = 20;
  std::uint64_t seed = 42;
  double tol = 1e-9;
};

struct ZeroVerdict {
  bool zero = true;
  /// First sampled point that failed, when `zero` is false.
  std::optional<Bindings> witness;
  double witness_value = 0.0;
  /// Largest |value| / (1 + scale) seen.
  double worst_ratio = 0.0;
};

/// Optional completion applied to each sampled point before evaluation,
/// e.g. to place it on a constraint surface.
using BindingHook = std::function<void(Bindings&)>;

/// Numeric zero test: true iff |e| < tol * (1 + scale) at every sample,
/// where scale is the magnitude of e evaluated with every sum replaced by
/// the sum of absolute values (a cancellation-aware size of the terms).
ZeroVerdict is_zero(const Expr& e, const SamplingDomain& domain,
                    const ZeroTestOptions& opts = {}, const BindingHook& hook = {});

struct ConjugatePair {
  std::string position;
  std::string momentum;
};

/// Ordered canonical pairs; all names distinct identifiers.
class ConjugatePairs {
 public:
  ConjugatePairs() = default;
  explicit ConjugatePairs(std::vector<ConjugatePair> pairs);
  std::span<const ConjugatePair> pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }

 private:
  std::vector<ConjugatePair> pairs_;
};

/// {F, G} = sum over pairs of dF/dq dG/dp - dF/dp dG/dq.
Expr poisson_bracket(const Expr& f, const Expr& g, const ConjugatePairs& pairs);

bool is_identifier(std::string_view s);

/// Expression flattened to postfix code over a fixed slot layout, for hot
/// loops. No error checking: domain errors surface as NaN or inf.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  /// Throws EvalError if a free symbol has no slot.
  CompiledExpr(const Expr& e, std::span<const std::string> slots);
  double operator()(std::span<const double> slots) const;

 private:
  struct Instr {
    Op op;
    int fn = 0;
    int index = 0;
    double value = 0.0;
  };
  std::vector<Instr> code_;
  std::size_t depth_ = 0;
};

}  // namespace hjflow
