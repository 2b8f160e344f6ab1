#include <cmath>
#include <random>
#include <thread>

#include "doctest.h"
#include "nlslide/errors.hpp"
#include "nlslide/expr.hpp"
#include "random_expr.hpp"

using namespace nlslide;

namespace {

double eval(std::string_view text, Environment env) { return parse(text).evaluate(env); }

}  // namespace

TEST_CASE("parse and evaluate the worked formulas") {
  CHECK(eval("x*(lambda^2-1)", {{"x", 2.0}, {"lambda", 0.0}}) == -2.0);

  const Expression e = parse("-lambda+2*lambda^2-x");
  CHECK(e.variables() == std::set<std::string>{"lambda", "x"});
  // (lambda, x) = (0.5, 0) is a root of Example 1's normal component
  CHECK(e.evaluate({{"lambda", 0.5}, {"x", 0.0}}) == doctest::Approx(0.0));
  CHECK(e.evaluate({{"lambda", 1.0}, {"x", 0.3}}) == doctest::Approx(1.0 - 0.3));
}

TEST_CASE("precedence and associativity") {
  CHECK(eval("-x^2", {{"x", 3.0}}) == -9.0);
  CHECK(eval("2^3^2", {}) == 512.0);
  CHECK(eval("2^-1", {}) == 0.5);
  CHECK(eval("8/4/2", {}) == 1.0);
  CHECK(eval("5-3-1", {}) == 1.0);
  CHECK(eval("1+2*3", {}) == 7.0);
  CHECK(eval("2*-3", {}) == -6.0);
  CHECK(eval("pi", {}) == doctest::Approx(M_PI));
  CHECK(eval("1.5e-3*2E2", {}) == doctest::Approx(0.3));
}

TEST_CASE("syntax errors carry offsets") {
  try {
    parse("x+*y");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 2);
  }
  CHECK_THROWS_AS(parse("foo(x)"), ParseError);
  CHECK_THROWS_AS(parse("(x+1"), ParseError);
  CHECK_THROWS_AS(parse("x y"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  try {
    parse("1 + bogus(2)");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
}

TEST_CASE("evaluation errors are explicit") {
  CHECK(eval("tanh(1/eps)", {{"eps", 1.0}}) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(eval("sqrt(1+8*x)", {{"x", -0.125}}) == 0.0);
  CHECK_THROWS_AS(eval("sqrt(x)", {{"x", -1.0}}), DomainError);
  CHECK_THROWS_AS(eval("log(x)", {{"x", 0.0}}), DomainError);
  CHECK_THROWS_AS(eval("atanh(x)", {{"x", 1.0}}), DomainError);
  CHECK_THROWS_AS(eval("1/x", {{"x", 0.0}}), DomainError);
  CHECK_THROWS_AS(eval("(-2)^0.5", {}), DomainError);
  CHECK_THROWS_AS(eval("exp(1000)", {}), DomainError);
  CHECK_THROWS_AS(eval("x + y", {{"x", 1.0}}), UnboundVariable);
}

TEST_CASE("symbolic derivatives") {
  const Expression g = parse("-lambda+2*lambda^2-x");
  const Expression dg = differentiate(g, "lambda");
  CHECK(dg.evaluate({{"lambda", 0.25}, {"x", 0.0}}) == doctest::Approx(0.0));
  CHECK(dg.evaluate({{"lambda", 1.0}, {"x", 0.0}}) == doctest::Approx(3.0));
  CHECK(!dg.depends_on("x"));

  CHECK(differentiate(parse("c"), "x").is_number(0.0));

  const Expression t = parse("tanh(y/eps)");
  const double y = 0.3;
  const double eps = 0.1;
  const double h = 1e-6;
  const double fd = (t.evaluate({{"y", y + h}, {"eps", eps}}) - t.evaluate({{"y", y - h}, {"eps", eps}})) / (2 * h);
  const double sym = differentiate(t, "y").evaluate({{"y", y}, {"eps", eps}});
  CHECK(std::abs(sym - fd) / std::abs(sym) < 1e-6);

  // non-constant exponent goes through the logarithmic rule
  const Expression p = parse("x^x");
  CHECK(differentiate(p, "x").evaluate({{"x", 2.0}}) == doctest::Approx(4.0 * (std::log(2.0) + 1.0)));
}

TEST_CASE("abs and sign derivatives are undefined at zero") {
  const Expression da = differentiate(parse("abs(x)"), "x");
  CHECK(da.evaluate({{"x", 2.0}}) == 1.0);
  CHECK(da.evaluate({{"x", -2.0}}) == -1.0);
  CHECK_THROWS_AS(da.evaluate({{"x", 0.0}}), DomainError);
  const Expression ds = differentiate(parse("sign(x)"), "x");
  CHECK(ds.evaluate({{"x", 0.5}}) == 0.0);
  CHECK_THROWS_AS(ds.evaluate({{"x", 0.0}}), DomainError);
  // serialized derivative reparses
  CHECK(parse(da.to_string()).evaluate({{"x", -3.0}}) == -1.0);
}

TEST_CASE("property: symbolic derivative matches central differences") {
  const std::vector<std::string> vars{"x", "y", "z"};
  testing::RandomFormula gen(vars, 20240611);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  const double h = 1e-6;
  int checked = 0;
  for (int k = 0; k < 200; ++k) {
    const Expression e = parse(gen.next(3));
    for (const auto& var : vars) {
      const Expression de = differentiate(e, var);
      Environment env{{"x", coord(rng)}, {"y", coord(rng)}, {"z", coord(rng)}};
      const double sym = de.evaluate(env);
      Environment lo = env, hi = env;
      lo[var] -= h;
      hi[var] += h;
      const double fd = (e.evaluate(hi) - e.evaluate(lo)) / (2 * h);
      const double err = std::abs(sym - fd);
      INFO(e.to_string(), " d/d", var);
      CHECK((err <= 1e-6 * std::abs(sym) || err <= 1e-9));
      ++checked;
    }
  }
  CHECK(checked == 600);
}

TEST_CASE("property: parse . serialize . parse preserves values") {
  const std::vector<std::string> vars{"x", "lambda"};
  testing::RandomFormula gen(vars, 99);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const Expression a = parse(gen.next(4));
    const std::string text = a.to_string();
    const Expression b = parse(text);
    CHECK(b.to_string() == text);
    const Environment env{{"x", coord(rng)}, {"lambda", coord(rng)}};
    CHECK(a.evaluate(env) == b.evaluate(env));
  }
  // negative literals and nested negation survive printing
  const Expression n = Expression::number(-2.5) * -Expression::variable("x");
  CHECK(parse(n.to_string()).evaluate({{"x", 2.0}}) == n.evaluate({{"x", 2.0}}));
  const Expression m = pow(-Expression::variable("x"), Expression::number(2.0));
  CHECK(parse(m.to_string()).evaluate({{"x", 3.0}}) == 9.0);
}

TEST_CASE("substitution") {
  const Expression e = parse("lambda^2 - y");
  const Expression s = substitute(substitute(e, "lambda", parse("tanh(cot(theta))")), "y", parse("r*cos(theta)"));
  const double theta = 1.1;
  const double r = 0.3;
  const double lam = std::tanh(std::cos(theta) / std::sin(theta));
  CHECK(s.evaluate({{"theta", theta}, {"r", r}}) == doctest::Approx(lam * lam - r * std::cos(theta)));
}

TEST_CASE("compiled form agrees with the tree walk and is shareable across threads") {
  const Expression e = parse("x*(lambda^2-1) + sin(y)/(2+x^2) - sqrt(abs(lambda))");
  const std::vector<std::string> slots{"lambda", "x", "y"};
  const CompiledExpression c(e, slots);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double v[3] = {coord(rng), coord(rng), coord(rng)};
    CHECK(c(v) == e.evaluate({{"lambda", v[0]}, {"x", v[1]}, {"y", v[2]}}));
  }
  CHECK_THROWS_AS(CompiledExpression(parse("q + 1"), slots), UnboundVariable);

  std::vector<double> results(4);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      double acc = 0.0;
      for (int i = 0; i < 1000; ++i) {
        const double v[3] = {0.001 * i, 0.5 + t, -0.25};
        acc += c(v);
      }
      results[static_cast<std::size_t>(t)] = acc;
    });
  }
  for (auto& th : pool) th.join();
  for (int t = 0; t < 4; ++t) {
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i) {
      acc += e.evaluate({{"lambda", 0.001 * i}, {"x", 0.5 + t}, {"y", -0.25}});
    }
    CHECK(results[static_cast<std::size_t>(t)] == acc);
  }
}
