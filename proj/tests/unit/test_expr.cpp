#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hjflow/error.hpp"
#include "hjflow/expr.hpp"
#include "oracles.hpp"

using namespace hjflow;

namespace {

double eval(std::string_view text, const Bindings& b = {}) { return evaluate(parse(text), b); }

SamplingDomain box(const std::vector<std::string>& names, double lo = -2.0, double hi = 2.0) {
  SamplingDomain d;
  for (const auto& n : names) d[n] = Interval{lo, hi, 0.0};
  return d;
}

Bindings draw(std::mt19937_64& rng, const std::vector<std::string>& names, double lo = -2.0,
              double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Bindings b;
  for (const auto& n : names) b[n] = u(rng);
  return b;
}

}  // namespace

// ---------------------------------------------------------------- parsing

TEST(Parse, SumOfProductAndCall) {
  const Expr e = parse("2*x + sin(y)");
  ASSERT_EQ(e.op(), Op::Add);
  EXPECT_EQ(e.args()[0].op(), Op::Mul);
  EXPECT_EQ(e.args()[1].op(), Op::Call);
  EXPECT_EQ(e.args()[1].name(), "sin");
  EXPECT_DOUBLE_EQ(evaluate(e, {{"x", 1.0}, {"y", 0.0}}), 2.0);
}

TEST(Parse, UnaryMinusBindsLooserThanPower) {
  const Expr e = parse("-x^2");
  ASSERT_EQ(e.op(), Op::Neg);
  EXPECT_EQ(e.args()[0].op(), Op::Pow);
  EXPECT_DOUBLE_EQ(evaluate(e, {{"x", 3.0}}), -9.0);
}

TEST(Parse, PowerIsRightAssociative) {
  EXPECT_DOUBLE_EQ(eval("2^3^2"), 512.0);
  EXPECT_DOUBLE_EQ(eval("2^-1"), 0.5);
}

TEST(Parse, LeftAssociativeSubtractionAndDivision) {
  EXPECT_DOUBLE_EQ(eval("10 - 4 - 3"), 3.0);
  EXPECT_DOUBLE_EQ(eval("24 / 4 / 2"), 3.0);
}

TEST(Parse, NumberForms) {
  EXPECT_DOUBLE_EQ(eval("1"), 1.0);
  EXPECT_DOUBLE_EQ(eval("0.3"), 0.3);
  EXPECT_DOUBLE_EQ(eval("2.5e-3"), 2.5e-3);
  EXPECT_DOUBLE_EQ(eval("4E2"), 400.0);
}

TEST(Parse, WhitespaceIsInsignificant) {
  EXPECT_DOUBLE_EQ(eval("  ( 1 +\t2 ) *\n3 "), 9.0);
}

TEST(Parse, MultiArgumentUserCall) {
  const Expr e = parse("f(x, y + 1, 2)");
  ASSERT_EQ(e.op(), Op::Call);
  EXPECT_EQ(e.args().size(), 3u);
  EXPECT_EQ(user_calls(e), std::set<std::string>{"f"});
}

TEST(ParseErrors, ReportColumns) {
  auto column_of = [](std::string_view text) -> std::size_t {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.column();
    }
    return 0;
  };
  EXPECT_EQ(column_of("x $ y"), 3u);
  EXPECT_EQ(column_of("2*"), 3u);
  EXPECT_EQ(column_of("(1 + 2"), 7u);
  EXPECT_EQ(column_of("1 2"), 3u);
  EXPECT_EQ(column_of(""), 1u);
  EXPECT_EQ(column_of("sin()"), 5u);
  EXPECT_EQ(column_of("f(1,)"), 5u);
}

TEST(ParseErrors, MessageMentionsColumn) {
  try {
    parse("a + #");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("column 5"), std::string::npos);
  }
}

// ---------------------------------------------------------------- printing

TEST(Print, RoundTripOfTrickyShapes) {
  for (const char* text : {"-x^2", "(-x)^2", "2^3^2", "(2^3)^2", "a-(b-c)", "a/(b/c)", "a/b/c",
                           "-(-x)", "x^-2", "-2^x", "(-2)^2", "sin(-x)*-y", "1e-300*x"}) {
    const Expr e = parse(text);
    const Expr back = parse(e.str());
    const Bindings b{{"x", 1.3}, {"y", -0.7}, {"a", 2.0}, {"b", 0.5}, {"c", 3.0}};
    EXPECT_DOUBLE_EQ(evaluate(back, b), evaluate(e, b)) << text << " printed as " << e.str();
  }
}

TEST(Print, RoundTripOnGeneratedCorpus) {
  oracle::ExprGen gen(7, {"x", "y", "z"});
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Expr e = parse(gen.next());
    const Expr back = parse(e.str());
    for (int k = 0; k < 20; ++k) {
      const auto b = draw(rng, {"x", "y", "z"});
      const double v = evaluate(e, b);
      EXPECT_NEAR(evaluate(back, b), v, 1e-12 * std::max(1.0, std::abs(v))) << e.str();
    }
  }
}

// ---------------------------------------------------------------- differentiation

TEST(Differentiate, Square) {
  EXPECT_DOUBLE_EQ(evaluate(differentiate(parse("x^2"), "x"), {{"x", 3.0}}), 6.0);
}

TEST(Differentiate, ChainRule) {
  const Expr d = differentiate(parse("sin(k*x)"), "x");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto b = draw(rng, {"k", "x"});
    EXPECT_NEAR(evaluate(d, b), b.at("k") * std::cos(b.at("k") * b.at("x")), 1e-14);
  }
}

TEST(Differentiate, KineticTermAgainstFiniteDifferences) {
  const Expr f = parse("(p+c)^2/(2*w)");
  const Expr d = differentiate(f, "p");
  EXPECT_NEAR(evaluate(d, {{"p", 0.3}, {"c", 0.0}, {"w", -1.0}}), -0.3, 1e-15);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    auto b = draw(rng, {"p", "c"});
    b["w"] = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    const double fd = oracle::central_difference(
        [&](double p) {
          auto bb = b;
          bb["p"] = p;
          return evaluate(f, bb);
        },
        b.at("p"));
    EXPECT_NEAR(evaluate(d, b), fd, 1e-8);
  }
}

TEST(Differentiate, BuiltinsAndQuotient) {
  const Bindings b{{"x", 0.7}};
  EXPECT_NEAR(evaluate(differentiate(parse("exp(2*x)"), "x"), b), 2 * std::exp(1.4), 1e-13);
  EXPECT_NEAR(evaluate(differentiate(parse("sqrt(x)"), "x"), b), 0.5 / std::sqrt(0.7), 1e-14);
  EXPECT_NEAR(evaluate(differentiate(parse("cos(x)"), "x"), b), -std::sin(0.7), 1e-15);
  EXPECT_NEAR(evaluate(differentiate(parse("1/x"), "x"), b), -1.0 / 0.49, 1e-13);
  EXPECT_NEAR(evaluate(differentiate(parse("x^2.5"), "x"), b), 2.5 * std::pow(0.7, 1.5), 1e-14);
}

TEST(Differentiate, OtherSymbolsAreConstants) {
  const Expr d = differentiate(parse("a*y + b"), "x");
  EXPECT_DOUBLE_EQ(evaluate(d, {}), 0.0);
}

TEST(Differentiate, UnsupportedConstructs) {
  EXPECT_THROW(differentiate(parse("f(x)"), "x"), DerivativeError);
  EXPECT_THROW(differentiate(parse("x^y"), "y"), DerivativeError);
  EXPECT_THROW(differentiate(parse("2^x"), "x"), DerivativeError);
  EXPECT_NO_THROW(differentiate(parse("x^y"), "z"));
}

TEST(Differentiate, AgreesWithFiniteDifferencesOnCorpus) {
  oracle::ExprGen gen(21, {"x", "y", "z"});
  std::mt19937_64 rng(23);
  int checked = 0;
  for (int i = 0; i < 50; ++i) {
    const Expr f = parse(gen.next(3));
    const Expr d = differentiate(f, "x");
    for (int k = 0; k < 10; ++k) {
      const auto b = draw(rng, {"x", "y", "z"}, -1.5, 1.5);
      const double fd = oracle::central_difference(
          [&](double x) {
            auto bb = b;
            bb["x"] = x;
            return evaluate(f, bb);
          },
          b.at("x"));
      const double exact = evaluate(d, b);
      EXPECT_LE(std::abs(fd - exact) / std::max(1.0, std::abs(exact)), 1e-6) << f.str();
      ++checked;
    }
  }
  EXPECT_EQ(checked, 500);
}

TEST(Differentiate, IsLinear) {
  oracle::ExprGen gen(31, {"x", "y"});
  std::mt19937_64 rng(37);
  for (int i = 0; i < 30; ++i) {
    const Expr f = parse(gen.next(3));
    const Expr g = parse(gen.next(3));
    const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
    const double c = std::uniform_real_distribution<double>(-3, 3)(rng);
    const Expr lhs = differentiate(Expr::number(a) * f + Expr::number(c) * g, "x");
    const Expr rhs = Expr::number(a) * differentiate(f, "x") + Expr::number(c) * differentiate(g, "x");
    EXPECT_TRUE(is_zero(lhs - rhs, box({"x", "y"})).zero) << f.str() << " | " << g.str();
  }
}

// ---------------------------------------------------------------- substitution

TEST(Substitute, SymbolDefinition) {
  const Definitions defs{{"A1", {{}, parse("a*cos(k*xm)")}}};
  const Expr e = substitute(parse("e*A1"), defs);
  EXPECT_EQ(e.str(), "e*(a*cos(k*xm))");
}

TEST(Substitute, ZeroDefinitionVanishes) {
  const Definitions defs{{"A1", {{}, parse("0")}}};
  EXPECT_TRUE(is_zero(substitute(parse("A1 + A1"), defs), box({"x"})).zero);
  EXPECT_TRUE(free_symbols(substitute(parse("A1 + A1"), defs)).empty());
}

TEST(Substitute, NestedToFixpoint) {
  const Definitions defs{{"B", {{}, parse("A1^2")}}, {"A1", {{}, parse("xm")}}};
  const Expr e = substitute(parse("B"), defs);
  EXPECT_EQ(e.str(), "xm^2");
}

TEST(Substitute, ParameterizedDefinition) {
  const Definitions defs{{"A", {{"s", "t"}, parse("s*cos(t)")}}};
  const Expr e = substitute(parse("A(2*x, y) + 1"), defs);
  EXPECT_TRUE(user_calls(e).empty());
  EXPECT_NEAR(evaluate(e, {{"x", 0.5}, {"y", 0.3}}), std::cos(0.3) + 1.0, 1e-15);
}

TEST(Substitute, CycleIsDetected) {
  const Definitions defs{{"A", {{}, parse("B + 1")}}, {"B", {{}, parse("A*2")}}};
  EXPECT_THROW(substitute(parse("A"), defs), SubstitutionError);
  const Definitions self{{"S", {{}, parse("S")}}};
  EXPECT_THROW(substitute(parse("S"), self), SubstitutionError);
}

TEST(Substitute, ArityMismatch) {
  const Definitions defs{{"A", {{"s"}, parse("s")}}};
  EXPECT_THROW(substitute(parse("A(1, 2)"), defs), SubstitutionError);
}

// ---------------------------------------------------------------- evaluation

TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(eval("sqrt(4)"), 2.0);
  EXPECT_DOUBLE_EQ(eval("1/(2*p)", {{"p", -1.0}}), -0.5);
  EXPECT_NEAR(eval("((0.3)^2 + 1)/(2*1)"), 0.545, 1e-15);
}

TEST(Evaluate, Errors) {
  try {
    eval("x + y", {{"x", 1.0}});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(eval("1/(x-1)", {{"x", 1.0}}), EvalError);
  EXPECT_THROW(eval("sqrt(-1)"), EvalError);
  EXPECT_THROW(eval("f(1)"), EvalError);
}

TEST(Evaluate, CompiledFormMatches) {
  oracle::ExprGen gen(41, {"x", "y", "z"});
  std::mt19937_64 rng(43);
  const std::vector<std::string> slots{"x", "y", "z"};
  for (int i = 0; i < 100; ++i) {
    const Expr e = parse(gen.next());
    const CompiledExpr c(e, slots);
    const auto b = draw(rng, slots);
    const std::vector<double> v{b.at("x"), b.at("y"), b.at("z")};
    const double ref = evaluate(e, b);
    EXPECT_NEAR(c(v), ref, 1e-12 * std::max(1.0, std::abs(ref))) << e.str();
  }
  EXPECT_THROW(CompiledExpr(parse("w"), slots), EvalError);
}

// ---------------------------------------------------------------- zero test

TEST(ZeroTest, PythagoreanIdentity) {
  const auto v = is_zero(parse("sin(x)^2 + cos(x)^2 - 1"), box({"x"}, -3, 3));
  EXPECT_TRUE(v.zero);
  EXPECT_FALSE(v.witness.has_value());
}

TEST(ZeroTest, DifferenceHasWitness) {
  const auto v = is_zero(parse("x - y"), box({"x", "y"}, -1, 1));
  ASSERT_FALSE(v.zero);
  ASSERT_TRUE(v.witness.has_value());
  EXPECT_NE(v.witness->at("x"), v.witness->at("y"));
  EXPECT_DOUBLE_EQ(v.witness_value, v.witness->at("x") - v.witness->at("y"));
}

TEST(ZeroTest, DeterministicForSeed) {
  const auto a = is_zero(parse("x*y - 0.1"), box({"x", "y"}), {20, 9, 1e-9});
  const auto b = is_zero(parse("x*y - 0.1"), box({"x", "y"}), {20, 9, 1e-9});
  ASSERT_TRUE(a.witness && b.witness);
  EXPECT_EQ(*a.witness, *b.witness);
}

TEST(ZeroTest, ToleranceIsRelativeToTermMagnitude) {
  // catastrophic cancellation of large terms is still judged zero
  EXPECT_TRUE(is_zero(parse("(1e8 + x) - 1e8 - x"), box({"x"})).zero);
  EXPECT_FALSE(is_zero(parse("1e-6*x"), box({"x"}, 1, 2)).zero);
}

TEST(ZeroTest, EvaluationErrorNamesThePoint) {
  try {
    is_zero(parse("1/x"), {{"x", Interval{0.0, 0.0, 0.0}}});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
  }
}

TEST(Sampler, RespectsExclusions) {
  Sampler s({{"p", Interval{-2.0, 2.0, 0.5}}, {"q", Interval{-1.0, 1.0, 0.0}}}, 42);
  for (int i = 0; i < 2000; ++i) {
    const auto b = s.next();
    EXPECT_GE(std::abs(b.at("p")), 0.5);
    EXPECT_LE(std::abs(b.at("p")), 2.0);
    EXPECT_LE(std::abs(b.at("q")), 1.0);
  }
}

// ---------------------------------------------------------------- brackets

TEST(PoissonBracket, CanonicalPair) {
  const ConjugatePairs pairs(std::vector<ConjugatePair>{{"q", "p"}});
  EXPECT_DOUBLE_EQ(evaluate(poisson_bracket(parse("q"), parse("p"), pairs), {}), 1.0);
}

TEST(PoissonBracket, OscillatorTermsAgainstFiniteDifferences) {
  const ConjugatePairs pairs(std::vector<ConjugatePair>{{"q", "p"}});
  const Expr f = parse("p^2/2");
  const Expr g = parse("q^2/2");
  const Expr br = poisson_bracket(f, g, pairs);
  EXPECT_DOUBLE_EQ(evaluate(br, {{"q", 2.0}, {"p", 3.0}}), -6.0);
  std::mt19937_64 rng(51);
  for (int i = 0; i < 10; ++i) {
    const auto b = draw(rng, {"q", "p"});
    const oracle::Point at{{"q", b.at("q")}, {"p", b.at("p")}};
    const double fd = oracle::fd_bracket([](const oracle::Point& x) { return x.at("p") * x.at("p") / 2; },
                                         [](const oracle::Point& x) { return x.at("q") * x.at("q") / 2; },
                                         at, {{"q", "p"}});
    EXPECT_NEAR(evaluate(br, b), fd, 1e-8);
  }
}

TEST(PoissonBracket, PairsMustBeDistinctIdentifiers) {
  EXPECT_THROW(ConjugatePairs(std::vector<ConjugatePair>{{"q", "q"}}), Error);
  EXPECT_THROW(ConjugatePairs(std::vector<ConjugatePair>{{"q", "p"}, {"r", "p"}}), Error);
  EXPECT_THROW(ConjugatePairs(std::vector<ConjugatePair>{{"1q", "p"}}), Error);
}

class BracketAlgebra : public ::testing::Test {
 protected:
  const std::vector<std::string> vars{"q1", "q2", "q3", "p1", "p2", "p3"};
  const ConjugatePairs pairs{std::vector<ConjugatePair>{{"q1", "p1"}, {"q2", "p2"}, {"q3", "p3"}}};
  SamplingDomain domain = box(vars);
  std::mt19937_64 rng{61};
  Expr poly() { return parse(oracle::random_polynomial(rng, vars)); }
};

TEST_F(BracketAlgebra, Antisymmetry) {
  for (int i = 0; i < 25; ++i) {
    const Expr f = poly(), g = poly();
    EXPECT_TRUE(is_zero(poisson_bracket(f, g, pairs) + poisson_bracket(g, f, pairs), domain).zero);
  }
}

TEST_F(BracketAlgebra, Bilinearity) {
  for (int i = 0; i < 25; ++i) {
    const Expr f = poly(), g = poly(), h = poly();
    const Expr a = Expr::number(std::uniform_real_distribution<double>(-2, 2)(rng));
    const Expr lhs = poisson_bracket(a * f + g, h, pairs);
    const Expr rhs = a * poisson_bracket(f, h, pairs) + poisson_bracket(g, h, pairs);
    EXPECT_TRUE(is_zero(lhs - rhs, domain).zero);
  }
}

TEST_F(BracketAlgebra, LeibnizRule) {
  for (int i = 0; i < 25; ++i) {
    const Expr f = poly(), g = poly(), h = poly();
    const Expr lhs = poisson_bracket(f, g * h, pairs);
    const Expr rhs = poisson_bracket(f, g, pairs) * h + g * poisson_bracket(f, h, pairs);
    EXPECT_TRUE(is_zero(lhs - rhs, domain).zero);
  }
}

TEST_F(BracketAlgebra, JacobiIdentity) {
  for (int i = 0; i < 10; ++i) {
    const Expr f = poly(), g = poly(), h = poly();
    const Expr j = poisson_bracket(f, poisson_bracket(g, h, pairs), pairs) +
                   poisson_bracket(g, poisson_bracket(h, f, pairs), pairs) +
                   poisson_bracket(h, poisson_bracket(f, g, pairs), pairs);
    EXPECT_TRUE(is_zero(j, domain).zero);
  }
}

TEST(Identifiers, Rules) {
  EXPECT_TRUE(is_identifier("p_x1"));
  EXPECT_TRUE(is_identifier("_a"));
  EXPECT_FALSE(is_identifier("1a"));
  EXPECT_FALSE(is_identifier(""));
  EXPECT_FALSE(is_identifier("a-b"));
}
