#include "hjflow/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "hjflow/error.hpp"

namespace hjflow {

struct Expr::Node {
  Op op = Op::Number;
  double value = 0.0;
  std::string name;
  std::vector<Expr> args;
};

namespace {

enum Builtin { kSin = 0, kCos = 1, kExp = 2, kSqrt = 3, kUser = -1 };

int builtin_index(std::string_view name) {
  if (name == "sin") return kSin;
  if (name == "cos") return kCos;
  if (name == "exp") return kExp;
  if (name == "sqrt") return kSqrt;
  return kUser;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

}  // namespace

Expr::Expr() : Expr(number(0.0)) {}

Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::number(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Number;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::symbol(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Symbol;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::call(std::string name, std::vector<Expr> args) {
  auto n = std::make_shared<Node>();
  n->op = Op::Call;
  n->name = std::move(name);
  n->args = std::move(args);
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = {std::move(lhs), std::move(rhs)};
  return Expr(std::move(n));
}

Expr Expr::negate(Expr operand) {
  auto n = std::make_shared<Node>();
  n->op = Op::Neg;
  n->args = {std::move(operand)};
  return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
std::span<const Expr> Expr::args() const { return node_->args; }

bool is_builtin_function(std::string_view name) { return builtin_index(name) != kUser; }

// ---------------------------------------------------------------- printing

namespace {

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    default:
      return 5;
  }
}

void print(const Expr& e, std::string& out);

void print_child(const Expr& e, bool parens, std::string& out) {
  if (parens) out += '(';
  print(e, out);
  if (parens) out += ')';
}

void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Number:
      if (std::signbit(e.value())) {
        out += "(-" + format_number(-e.value()) + ")";
      } else {
        out += format_number(e.value());
      }
      return;
    case Op::Symbol:
      out += e.name();
      return;
    case Op::Call: {
      out += e.name();
      out += '(';
      bool first = true;
      for (const auto& a : e.args()) {
        if (!first) out += ", ";
        first = false;
        print(a, out);
      }
      out += ')';
      return;
    }
    case Op::Neg:
      out += '-';
      print_child(e.args()[0], precedence(e.args()[0]) < 3, out);
      return;
    case Op::Pow:
      print_child(e.args()[0], precedence(e.args()[0]) <= 4, out);
      out += '^';
      print_child(e.args()[1], precedence(e.args()[1]) < 3, out);
      return;
    default: {
      const int p = precedence(e);
      const char* sym = e.op() == Op::Add   ? " + "
                        : e.op() == Op::Sub ? " - "
                        : e.op() == Op::Mul ? "*"
                                            : "/";
      print_child(e.args()[0], precedence(e.args()[0]) < p, out);
      out += sym;
      print_child(e.args()[1], precedence(e.args()[1]) <= p, out);
      return;
    }
  }
}

}  // namespace

std::string Expr::str() const {
  std::string out;
  print(*this, out);
  return out;
}

// ---------------------------------------------------------------- folding

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.value() + b.value());
  if (a.is_number(0.0)) return b;
  if (b.is_number(0.0)) return a;
  return Expr::binary(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.value() - b.value());
  if (b.is_number(0.0)) return a;
  if (a.is_number(0.0)) return -b;
  return Expr::binary(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.value() * b.value());
  if (a.is_number(0.0) || b.is_number(0.0)) return Expr::number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  if (a.is_number(-1.0)) return -b;
  if (b.is_number(-1.0)) return -a;
  return Expr::binary(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number() && b.value() != 0.0) {
    return Expr::number(a.value() / b.value());
  }
  if (b.is_number(1.0)) return a;
  if (a.is_number(0.0) && !b.is_number()) return Expr::number(0.0);
  return Expr::binary(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_number()) return Expr::number(-a.value());
  if (a.op() == Op::Neg) return a.args()[0];
  return Expr::negate(a);
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (exponent.is_number(0.0)) return Expr::number(1.0);
  if (exponent.is_number(1.0)) return base;
  if (base.is_number() && exponent.is_number()) {
    const double v = std::pow(base.value(), exponent.value());
    if (std::isfinite(v)) return Expr::number(v);
  }
  return Expr::binary(Op::Pow, base, exponent);
}

namespace {

Expr fold_call(const std::string& name, std::vector<Expr> args) {
  const int fn = builtin_index(name);
  if (fn != kUser && args.size() == 1 && args[0].is_number()) {
    const double x = args[0].value();
    switch (fn) {
      case kSin:
        return Expr::number(std::sin(x));
      case kCos:
        return Expr::number(std::cos(x));
      case kExp:
        return Expr::number(std::exp(x));
      case kSqrt:
        if (x >= 0) return Expr::number(std::sqrt(x));
        break;
    }
  }
  return Expr::call(name, std::move(args));
}

Expr rebuild(const Expr& e, const std::vector<Expr>& args) {
  switch (e.op()) {
    case Op::Add:
      return args[0] + args[1];
    case Op::Sub:
      return args[0] - args[1];
    case Op::Mul:
      return args[0] * args[1];
    case Op::Div:
      return args[0] / args[1];
    case Op::Pow:
      return pow(args[0], args[1]);
    case Op::Neg:
      return -args[0];
    case Op::Call:
      return fold_call(e.name(), args);
    default:
      return e;
  }
}

}  // namespace

Expr fold(const Expr& e) {
  if (e.op() == Op::Number || e.op() == Op::Symbol) return e;
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(fold(a));
  return rebuild(e, args);
}

// ---------------------------------------------------------------- parsing

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), [&](char c) { return alpha(c) || digit(c); });
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse_all() {
    skip_ws();
    if (at_end()) throw ParseError("empty expression", pos_ + 1);
    Expr e = expr();
    skip_ws();
    if (!at_end()) {
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_ + 1);
    }
    return e;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                         text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_ws();
    if (!at_end() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (at_end()) {
      throw ParseError(std::string("expected '") + c + "' but input ended", pos_ + 1);
    }
    if (text_[pos_] != c) {
      throw ParseError(std::string("expected '") + c + "'", pos_ + 1);
    }
    ++pos_;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = Expr::binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = Expr::binary(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return Expr::negate(unary());
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (accept('^')) return Expr::binary(Op::Pow, base, unary());
    return base;
  }

  static bool is_digit(char c) { return c >= '0' && c <= '9'; }
  static bool is_alpha(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  }

  Expr atom() {
    skip_ws();
    if (at_end()) throw ParseError("unexpected end of expression", pos_ + 1);
    const char c = text_[pos_];
    if (is_digit(c)) return number();
    if (is_alpha(c)) {
      const std::size_t start = pos_;
      while (!at_end() && (is_alpha(text_[pos_]) || is_digit(text_[pos_]))) ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      if (accept('(')) {
        std::vector<Expr> args;
        args.push_back(expr());
        while (accept(',')) args.push_back(expr());
        expect(')');
        return Expr::call(std::move(name), std::move(args));
      }
      return Expr::symbol(std::move(name));
    }
    if (c == '(') {
      ++pos_;
      Expr inner = expr();
      expect(')');
      return inner;
    }
    static constexpr std::string_view kOperators = "+-*/^(),";
    if (kOperators.find(c) != std::string_view::npos) {
      throw ParseError(std::string("unexpected '") + c + "'", pos_ + 1);
    }
    throw ParseError(std::string("unknown character '") + c + "'", pos_ + 1);
  }

  Expr number() {
    const std::size_t start = pos_;
    while (!at_end() && is_digit(text_[pos_])) ++pos_;
    if (!at_end() && text_[pos_] == '.') {
      ++pos_;
      if (at_end() || !is_digit(text_[pos_])) {
        throw ParseError("expected digit after '.'", pos_ + 1);
      }
      while (!at_end() && is_digit(text_[pos_])) ++pos_;
    }
    if (!at_end() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && is_digit(text_[look])) {
        pos_ = look;
        while (!at_end() && is_digit(text_[pos_])) ++pos_;
      } else {
        throw ParseError("malformed exponent", look + 1);
      }
    }
    double v = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ParseError("bad number", start + 1);
    return Expr::number(v);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------- queries

namespace {

template <class F>
void visit(const Expr& e, F&& f) {
  f(e);
  for (const auto& a : e.args()) visit(a, f);
}

}  // namespace

std::set<std::string> free_symbols(const Expr& e) {
  std::set<std::string> out;
  visit(e, [&](const Expr& n) {
    if (n.op() == Op::Symbol) out.insert(n.name());
  });
  return out;
}

std::set<std::string> user_calls(const Expr& e) {
  std::set<std::string> out;
  visit(e, [&](const Expr& n) {
    if (n.op() == Op::Call && !is_builtin_function(n.name())) out.insert(n.name());
  });
  return out;
}

bool depends_on(const Expr& e, std::string_view symbol) {
  if (e.op() == Op::Symbol) return e.name() == symbol;
  for (const auto& a : e.args()) {
    if (depends_on(a, symbol)) return true;
  }
  return false;
}

// ---------------------------------------------------------------- calculus

Expr differentiate(const Expr& e, std::string_view var) {
  switch (e.op()) {
    case Op::Number:
      return Expr::number(0.0);
    case Op::Symbol:
      return Expr::number(e.name() == var ? 1.0 : 0.0);
    case Op::Add:
      return differentiate(e.args()[0], var) + differentiate(e.args()[1], var);
    case Op::Sub:
      return differentiate(e.args()[0], var) - differentiate(e.args()[1], var);
    case Op::Neg:
      return -differentiate(e.args()[0], var);
    case Op::Mul: {
      const Expr& u = e.args()[0];
      const Expr& v = e.args()[1];
      return differentiate(u, var) * v + u * differentiate(v, var);
    }
    case Op::Div: {
      const Expr& u = e.args()[0];
      const Expr& v = e.args()[1];
      const Expr du = differentiate(u, var);
      const Expr dv = differentiate(v, var);
      if (dv.is_number(0.0)) return du / v;
      return (du * v - u * dv) / pow(v, Expr::number(2.0));
    }
    case Op::Pow: {
      const Expr& base = e.args()[0];
      const Expr& exponent = e.args()[1];
      if (depends_on(exponent, var)) {
        throw DerivativeError("cannot differentiate a power whose exponent depends on '" +
                              std::string(var) + "': " + e.str());
      }
      const Expr db = differentiate(base, var);
      if (db.is_number(0.0)) return Expr::number(0.0);
      return exponent * pow(base, exponent - Expr::number(1.0)) * db;
    }
    case Op::Call: {
      const int fn = builtin_index(e.name());
      if (fn == kUser || e.args().size() != 1) {
        throw DerivativeError("cannot differentiate call to '" + e.name() + "'");
      }
      const Expr& u = e.args()[0];
      const Expr du = differentiate(u, var);
      if (du.is_number(0.0)) return Expr::number(0.0);
      switch (fn) {
        case kSin:
          return Expr::call("cos", {u}) * du;
        case kCos:
          return -(Expr::call("sin", {u}) * du);
        case kExp:
          return e * du;
        default:
          return du / (Expr::number(2.0) * e);
      }
    }
  }
  return Expr::number(0.0);
}

// ---------------------------------------------------------------- substitution

namespace {

bool has_defined_name(const Expr& e, const Definitions& defs) {
  if ((e.op() == Op::Symbol || e.op() == Op::Call) && defs.contains(e.name())) return true;
  for (const auto& a : e.args()) {
    if (has_defined_name(a, defs)) return true;
  }
  return false;
}

Expr expand_once(const Expr& e, const Definitions& defs) {
  if (e.op() == Op::Number) return e;
  if (e.op() == Op::Symbol) {
    auto it = defs.find(e.name());
    if (it == defs.end()) return e;
    if (!it->second.params.empty()) {
      throw SubstitutionError("'" + e.name() + "' takes " +
                              std::to_string(it->second.params.size()) +
                              " argument(s) but is used as a symbol");
    }
    return it->second.body;
  }
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(expand_once(a, defs));
  if (e.op() == Op::Call) {
    auto it = defs.find(e.name());
    if (it != defs.end()) {
      const auto& params = it->second.params;
      if (params.size() != args.size()) {
        throw SubstitutionError("'" + e.name() + "' expects " + std::to_string(params.size()) +
                                " argument(s), got " + std::to_string(args.size()));
      }
      std::map<std::string, Expr, std::less<>> actuals;
      for (std::size_t i = 0; i < params.size(); ++i) actuals.emplace(params[i], args[i]);
      return replace_symbols(it->second.body, actuals);
    }
    return Expr::call(e.name(), std::move(args));
  }
  if (e.op() == Op::Neg) return Expr::negate(args[0]);
  return Expr::binary(e.op(), args[0], args[1]);
}

}  // namespace

Expr substitute(const Expr& e, const Definitions& defs, int max_depth) {
  Expr cur = e;
  for (int round = 0; round <= max_depth; ++round) {
    if (!has_defined_name(cur, defs)) return cur;
    cur = expand_once(cur, defs);
  }
  throw SubstitutionError("definition expansion did not terminate after " +
                          std::to_string(max_depth) + " rounds (cyclic definitions?)");
}

Expr replace_symbols(const Expr& e, const std::map<std::string, Expr, std::less<>>& with) {
  if (e.op() == Op::Number) return e;
  if (e.op() == Op::Symbol) {
    auto it = with.find(e.name());
    return it == with.end() ? e : it->second;
  }
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(replace_symbols(a, with));
  if (e.op() == Op::Call) return Expr::call(e.name(), std::move(args));
  if (e.op() == Op::Neg) return Expr::negate(args[0]);
  return Expr::binary(e.op(), args[0], args[1]);
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Scaled {
  double value;
  double scale;
};

Scaled eval_scaled(const Expr& e, const Bindings& b) {
  switch (e.op()) {
    case Op::Number:
      return {e.value(), std::abs(e.value())};
    case Op::Symbol: {
      auto it = b.find(e.name());
      if (it == b.end()) throw EvalError("no binding for symbol '" + e.name() + "'");
      return {it->second, std::abs(it->second)};
    }
    case Op::Neg: {
      auto a = eval_scaled(e.args()[0], b);
      return {-a.value, a.scale};
    }
    case Op::Add:
    case Op::Sub: {
      auto l = eval_scaled(e.args()[0], b);
      auto r = eval_scaled(e.args()[1], b);
      const double v = e.op() == Op::Add ? l.value + r.value : l.value - r.value;
      return {v, l.scale + r.scale};
    }
    case Op::Mul: {
      auto l = eval_scaled(e.args()[0], b);
      auto r = eval_scaled(e.args()[1], b);
      return {l.value * r.value, l.scale * r.scale};
    }
    case Op::Div: {
      auto l = eval_scaled(e.args()[0], b);
      auto r = eval_scaled(e.args()[1], b);
      if (r.value == 0.0) throw EvalError("division by zero in " + e.str());
      return {l.value / r.value, l.scale / std::abs(r.value)};
    }
    case Op::Pow: {
      auto l = eval_scaled(e.args()[0], b);
      auto r = eval_scaled(e.args()[1], b);
      const double v = std::pow(l.value, r.value);
      if (!std::isfinite(v) && std::isfinite(l.value) && std::isfinite(r.value)) {
        throw EvalError("power is not finite: " + e.str());
      }
      return {v, std::abs(v)};
    }
    case Op::Call: {
      const int fn = builtin_index(e.name());
      if (fn == kUser) throw EvalError("unknown function '" + e.name() + "'");
      if (e.args().size() != 1) throw EvalError("'" + e.name() + "' takes one argument");
      const double x = eval_scaled(e.args()[0], b).value;
      double v = 0.0;
      switch (fn) {
        case kSin:
          v = std::sin(x);
          break;
        case kCos:
          v = std::cos(x);
          break;
        case kExp:
          v = std::exp(x);
          break;
        default:
          if (x < 0.0) throw EvalError("sqrt of negative value in " + e.str());
          v = std::sqrt(x);
      }
      return {v, std::abs(v)};
    }
  }
  return {0.0, 0.0};
}

}  // namespace

double evaluate(const Expr& e, const Bindings& b) { return eval_scaled(e, b).value; }

std::string format_bindings(const Bindings& b) {
  std::ostringstream os;
  os.precision(17);
  os << '{';
  bool first = true;
  for (const auto& [k, v] : b) {
    if (!first) os << ", ";
    first = false;
    os << k << ": " << v;
  }
  os << '}';
  return os.str();
}

// ---------------------------------------------------------------- sampling

struct Sampler::Impl {
  struct Piece {
    std::string name;
    double lo1, hi1, lo2, hi2;  // two admissible segments; second may be empty
  };
  std::vector<Piece> pieces;
  std::mt19937_64 rng;
};

Sampler::Sampler(const SamplingDomain& domain, std::uint64_t seed)
    : impl_(std::make_shared<Impl>()) {
  impl_->rng.seed(seed);
  for (const auto& [name, iv] : domain) {
    if (!(iv.lo <= iv.hi)) throw EvalError("empty sampling interval for '" + name + "'");
    Impl::Piece p{name, iv.lo, iv.hi, 0.0, 0.0};
    const double b = iv.exclude_abs_below;
    if (b > 0.0) {
      p.lo1 = iv.lo;
      p.hi1 = std::min(iv.hi, -b);
      p.lo2 = std::max(iv.lo, b);
      p.hi2 = iv.hi;
      if (p.hi1 < p.lo1 && p.hi2 < p.lo2) {
        throw EvalError("sampling interval for '" + name + "' lies inside its exclusion");
      }
    }
    impl_->pieces.push_back(p);
  }
}

Bindings Sampler::next() {
  Bindings out;
  for (const auto& p : impl_->pieces) {
    const double len1 = std::max(0.0, p.hi1 - p.lo1);
    const double len2 = std::max(0.0, p.hi2 - p.lo2);
    // 53 random bits mapped to [0, 1)
    const double u = static_cast<double>(impl_->rng() >> 11) * 0x1.0p-53;
    const double t = u * (len1 + len2);
    out[p.name] = t < len1 || len2 == 0.0 ? p.lo1 + t : p.lo2 + (t - len1);
  }
  return out;
}

ZeroVerdict is_zero(const Expr& e, const SamplingDomain& domain, const ZeroTestOptions& opts,
                    const BindingHook& hook) {
  if (opts.samples < 1) throw EvalError("is_zero needs at least one sample");
  for (const auto& s : free_symbols(e)) {
    if (!domain.contains(s) && !hook) {
      throw EvalError("no sampling interval for symbol '" + s + "'");
    }
  }
  Sampler sampler(domain, opts.seed);
  ZeroVerdict verdict;
  for (int i = 0; i < opts.samples; ++i) {
    Bindings b = sampler.next();
    if (hook) hook(b);
    Scaled r{};
    try {
      r = eval_scaled(e, b);
    } catch (const EvalError& err) {
      throw EvalError(std::string(err.what()) + " at sample " + format_bindings(b));
    }
    const double ratio = std::abs(r.value) / (1.0 + r.scale);
    verdict.worst_ratio = std::max(verdict.worst_ratio, std::isnan(ratio) ? INFINITY : ratio);
    if (!(std::abs(r.value) < opts.tol * (1.0 + r.scale)) && verdict.zero) {
      verdict.zero = false;
      verdict.witness = b;
      verdict.witness_value = r.value;
    }
  }
  return verdict;
}

// ---------------------------------------------------------------- brackets

ConjugatePairs::ConjugatePairs(std::vector<ConjugatePair> pairs) : pairs_(std::move(pairs)) {
  std::set<std::string> seen;
  for (const auto& p : pairs_) {
    for (const auto* n : {&p.position, &p.momentum}) {
      if (!is_identifier(*n)) throw SchemaError("invalid identifier '" + *n + "' in pair list");
      if (!seen.insert(*n).second) throw SchemaError("symbol '" + *n + "' repeated in pair list");
    }
  }
}

Expr poisson_bracket(const Expr& f, const Expr& g, const ConjugatePairs& pairs) {
  Expr sum = Expr::number(0.0);
  for (const auto& [q, p] : pairs.pairs()) {
    sum = sum + (differentiate(f, q) * differentiate(g, p) -
                 differentiate(f, p) * differentiate(g, q));
  }
  return sum;
}

// ---------------------------------------------------------------- compiled

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) {
  std::size_t depth = 0;
  auto emit = [&](auto&& self, const Expr& n) -> void {
    switch (n.op()) {
      case Op::Number:
        code_.push_back({Op::Number, 0, 0, n.value()});
        depth_ = std::max(depth_, ++depth);
        return;
      case Op::Symbol: {
        auto it = std::find(slots.begin(), slots.end(), n.name());
        if (it == slots.end()) throw EvalError("no slot for symbol '" + n.name() + "'");
        code_.push_back({Op::Symbol, 0, static_cast<int>(it - slots.begin()), 0.0});
        depth_ = std::max(depth_, ++depth);
        return;
      }
      case Op::Call: {
        const int fn = builtin_index(n.name());
        if (fn == kUser || n.args().size() != 1) {
          throw EvalError("cannot compile call to '" + n.name() + "'");
        }
        self(self, n.args()[0]);
        code_.push_back({Op::Call, fn, 0, 0.0});
        return;
      }
      case Op::Neg:
        self(self, n.args()[0]);
        code_.push_back({Op::Neg, 0, 0, 0.0});
        return;
      default:
        self(self, n.args()[0]);
        self(self, n.args()[1]);
        code_.push_back({n.op(), 0, 0, 0.0});
        --depth;
        return;
    }
  };
  emit(emit, e);
}

double CompiledExpr::operator()(std::span<const double> slots) const {
  if (code_.empty()) return 0.0;
  std::array<double, 64> small{};
  std::vector<double> large;
  double* stack = small.data();
  if (depth_ > small.size()) {
    large.resize(depth_);
    stack = large.data();
  }
  std::size_t top = 0;
  for (const auto& in : code_) {
    switch (in.op) {
      case Op::Number:
        stack[top++] = in.value;
        break;
      case Op::Symbol:
        stack[top++] = slots[in.index];
        break;
      case Op::Neg:
        stack[top - 1] = -stack[top - 1];
        break;
      case Op::Add:
        --top;
        stack[top - 1] += stack[top];
        break;
      case Op::Sub:
        --top;
        stack[top - 1] -= stack[top];
        break;
      case Op::Mul:
        --top;
        stack[top - 1] *= stack[top];
        break;
      case Op::Div:
        --top;
        stack[top - 1] /= stack[top];
        break;
      case Op::Pow: {
        --top;
        const double ex = stack[top];
        double& base = stack[top - 1];
        base = ex == 2.0 ? base * base : std::pow(base, ex);
        break;
      }
      case Op::Call: {
        double& x = stack[top - 1];
        switch (in.fn) {
          case kSin:
            x = std::sin(x);
            break;
          case kCos:
            x = std::cos(x);
            break;
          case kExp:
            x = std::exp(x);
            break;
          default:
            x = std::sqrt(x);
        }
        break;
      }
    }
  }
  return stack[0];
}

}  // namespace hjflow
