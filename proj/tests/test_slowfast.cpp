#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "nlslide/errors.hpp"
#include "nlslide/slowfast.hpp"

using namespace nlslide;
using nlslide::testing::exprs;
using nlslide::testing::planar;
using nlslide::testing::vec;

namespace {

ContinuousCombination ex1() {
  return ContinuousCombination::from_components(planar({"1", "1-x"}, {"1", "3-x"}),
                                                exprs({"-1+2*lambda^2", "-lambda+2*lambda^2-x"}));
}

ContinuousCombination ex10() {
  PiecewiseSystem sys({"x", "y", "z"}, parse("z"), exprs({"0", "0", "-1"}), exprs({"0", "1", "1"}));
  return ContinuousCombination::from_components(
      sys, exprs({"x*(lambda^2-1)", "1/2-lambda/2-y/2*(lambda^2-1)", "-lambda^3"}));
}

ContinuousCombination ex11a() {
  PiecewiseSystem sys({"x", "y", "z"}, parse("z"), exprs({"1", "0", "x"}), exprs({"0", "0", "1"}));
  return ContinuousCombination(sys, exprs({"(lambda^2-1)*(-2+2*x+x^2-x^3)/(4*x)",
                                           "(lambda^2-1)*(y-2*x*y+x^2*y)/(4*x)", "0"}));
}

double real_part(const std::complex<double>& z) { return z.real(); }

}  // namespace

TEST_CASE("slow-fast forms of the quadratic example") {
  const auto sf = build_slow_fast(ex1(), TransitionFunction::tanh());
  REQUIRE(sf.has_closed_form());
  CHECK(sf.slow_dim() == 1);
  const auto& phi = sf.transition();
  for (double th : {0.3, 1.0, 1.7, 2.9}) {
    for (double x : {-1.0, 0.0, 0.4, 2.5}) {
      const double p = phi.psi(th);
      CHECK(sf.alpha0(0.0, th, vec({x})) == doctest::Approx(-p + 2 * p * p - x).epsilon(1e-13));
      CHECK(sf.beta(0.0, th, vec({x}))[0] == doctest::Approx(-1 + 2 * p * p).epsilon(1e-13));
      const Vec slow = sf.slow_field(0.1, th, vec({x}));
      const double a = sf.alpha0(0.1, th, vec({x}));
      CHECK(slow[0] == doctest::Approx(-std::sin(th) * a / 0.1));
      const Vec fast = sf.fast_field(0.1, th, vec({x}));
      CHECK(fast[0] == doctest::Approx(-std::sin(th) * a));
      CHECK(fast[1] == doctest::Approx(0.1 * slow[1]));
    }
  }
  // the closed form evaluates to the same numbers at r > 0
  const Expression& a0 = sf.alpha0_expression();
  const Environment env{{"r", 0.2}, {"theta", 1.3}, {"x", 0.7}};
  CHECK(a0.evaluate(env) == doctest::Approx(sf.alpha0(0.2, 1.3, vec({0.7}))).epsilon(1e-13));
  CHECK(sf.beta_expressions().at(0).evaluate(env) == doctest::Approx(sf.beta(0.2, 1.3, vec({0.7}))[0]));
}

TEST_CASE("theta derivative factors through psi'") {
  for (const auto& phi : {TransitionFunction::tanh(), TransitionFunction::custom(parse("s/sqrt(1+s^2)"))}) {
    const auto sf = build_slow_fast(ex1(), phi);
    const Expression d = differentiate(sf.alpha0_expression(), "theta");
    for (double th = 0.2; th < 3.0; th += 0.35) {
      for (double x : {-0.1, 0.3, 2.0}) {
        const double sym = d.evaluate({{"r", 0.0}, {"theta", th}, {"x", x}});
        const double chain = phi.dpsi(th) * sf.combination().dg_dlambda(phi.psi(th), vec({x, 0.0}));
        CHECK(sym == doctest::Approx(chain).epsilon(1e-10));
        CHECK(sf.dalpha0_dtheta(0.0, th, vec({x})) == doctest::Approx(chain).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("three-dimensional closed forms and the sewing normal form") {
  const auto sf = build_slow_fast(ex10(), TransitionFunction::tanh());
  CHECK(sf.slow_dim() == 2);
  for (double th : {0.5, 1.5, 2.5}) {
    const double p = sf.transition().psi(th);
    const Vec x = vec({0.3, -0.7});
    CHECK(sf.alpha0(0.0, th, x) == doctest::Approx(-p * p * p));
    const Vec b = sf.beta(0.0, th, x);
    CHECK(b[0] == doctest::Approx(0.3 * (p * p - 1)));
    CHECK(b[1] == doctest::Approx(0.5 - p / 2 + 0.35 * (p * p - 1)));
  }

  const auto sew = build_slow_fast(ContinuousCombination(planar({"1", "1"}, {"2", "-1"})), TransitionFunction::tanh());
  for (double th : {0.4, 1.0, 2.2}) CHECK(sew.alpha0(0.0, th, vec({0.5})) == doctest::Approx(sew.transition().psi(th)));

  const auto sharp = build_slow_fast(ex1(), TransitionFunction::sharp());
  CHECK_FALSE(sharp.has_closed_form());
  CHECK_THROWS_AS(sharp.alpha0_expression(), ModelError);
  CHECK(sharp.alpha0(0.0, 1.0, vec({0.0})) == doctest::Approx(ex1().g(sharp.transition().psi(1.0), vec({0.0, 0.0}))));
}

TEST_CASE("coordinate form is required") {
  PiecewiseSystem sys({"x", "y"}, parse("y-x"), exprs({"1", "-1"}), exprs({"1", "1"}));
  CHECK_THROWS_AS(build_slow_fast(ContinuousCombination(sys), TransitionFunction::tanh()), CoordinateFormError);
}

TEST_CASE("directional blow-up composed with G equals the polar blow-up") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ur(0.0, 3.0), ut(1e-3, 3.14059), ux(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec x = vec({ux(rng), ux(rng)});
    const auto m = blowup_maps(ur(rng), ut(rng), x);
    REQUIRE(m.polar.size() == 4);
    CHECK((m.polar - m.directional).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  CHECK_THROWS_AS(blowup_maps(1.0, 0.0, vec({0.0})), DomainError);
  CHECK_THROWS_AS(blowup_maps(-1.0, 1.0, vec({0.0})), DomainError);
}

TEST_CASE("slow manifold of the quadratic example: one fold-shaped branch") {
  const auto sf = build_slow_fast(ex1(), TransitionFunction::tanh());
  const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-0.125}), vec({3.0}), 1e-3));
  REQUIRE(sm.branches.size() == 1);
  const auto& nodes = sm.branches[0].nodes;
  const auto& a = nodes.front();
  const auto& b = nodes.back();
  CHECK(a.meets_tangency);
  CHECK(b.meets_tangency);
  CHECK(a.theta < 1e-5);
  CHECK(b.theta > M_PI - 1e-5);
  CHECK(a.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(b.x[0] == doctest::Approx(3.0).epsilon(1e-6));
  int non_hyp = 0;
  for (const auto& n : nodes) {
    if (n.hyperbolic) continue;
    ++non_hyp;
    CHECK(n.x[0] == doctest::Approx(-0.125).epsilon(1e-9));
    CHECK(n.lambda == doctest::Approx(0.25).epsilon(1e-6));
  }
  CHECK(non_hyp == 1);

  // on a grid that straddles the fold, the fold node is inserted
  const auto wide = trace_slow_manifold(sf, ScanGrid::with_step(vec({-1.0}), vec({4.0}), 1e-2));
  REQUIRE(wide.branches.size() == 1);
  bool fold = false;
  for (const auto& n : wide.branches[0].nodes) {
    if (n.fold) {
      fold = true;
      CHECK(n.x[0] == doctest::Approx(-0.125).epsilon(1e-9));
      CHECK_FALSE(n.hyperbolic);
    }
  }
  CHECK(fold);
}

TEST_CASE("reduced flow matches the nonlinear sliding field") {
  const auto c = ex1();
  const auto sf = build_slow_fast(c, TransitionFunction::tanh());
  for (double x : {-0.1, 0.0, 0.5, 2.0}) {
    const auto roots = interior_roots(lambda_roots(c, vec({x, 0.0})));
    for (std::size_t k = 0; k < roots.size(); ++k) {
      const double th = sf.transition().psi_inverse(roots[k].lambda);
      const Vec red = reduced_flow(sf, th, vec({x}));
      const Vec sl = sliding_field(c, vec({x, 0.0}), static_cast<int>(k));
      CHECK(std::abs(red[0] - sl[0]) < 1e-9);
    }
  }
  CHECK_THROWS_AS(reduced_flow(sf, 1.0, vec({5.0})), NotOnManifold);
}

TEST_CASE("equilibria on the quadratic example are repelling") {
  const auto sf = build_slow_fast(ex1(), TransitionFunction::tanh());
  const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-0.125}), vec({3.0}), 1e-3));
  const auto eq = reduced_equilibria(sf, sm.branches.at(0));
  REQUIRE(eq.size() == 2);
  CHECK(eq[0].x[0] == doctest::Approx(1 - std::sqrt(2.0) / 2).epsilon(1e-9));
  CHECK(eq[0].lambda == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-9));
  CHECK(eq[1].x[0] == doctest::Approx(1 + std::sqrt(2.0) / 2).epsilon(1e-9));
  CHECK(eq[1].lambda == doctest::Approx(-1 / std::sqrt(2.0)).epsilon(1e-9));
  for (const auto& e : eq) CHECK(e.type == EquilibriumType::Repelling);
}

TEST_CASE("straight slow manifold with a repelling equilibrium") {
  const auto c = ContinuousCombination::from_components(planar({"x", "-1-y"}, {"x", "1-y"}),
                                                        exprs({"-1+lambda^2+x", "-1-lambda+lambda^2-y"}));
  const auto sf = build_slow_fast(c, TransitionFunction::tanh());
  const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-2.0}), vec({2.0}), 1e-2));
  REQUIRE(sm.branches.size() == 1);
  const double l0 = (1 - std::sqrt(5.0)) / 2;
  for (const auto& n : sm.branches[0].nodes) CHECK(n.lambda == doctest::Approx(l0).epsilon(1e-9));
  CHECK(sm.branches[0].all_hyperbolic());
  const auto eq = reduced_equilibria(sf, sm.branches[0]);
  REQUIRE(eq.size() == 1);
  CHECK(eq[0].x[0] == doctest::Approx((std::sqrt(5.0) - 1) / 2).epsilon(1e-9));
  CHECK(eq[0].type == EquilibriumType::Repelling);
}

TEST_CASE("hyperbolic-fold example: asymptotes at psi = 1/3 and a degenerate equilibrium") {
  const auto c = ContinuousCombination::from_components(planar({"1", "x"}, {"1", "-2*x"}),
                                                        exprs({"lambda^2", "-1+lambda^2+(-1/2+3*lambda/2)*x"}));
  const auto sf = build_slow_fast(c, TransitionFunction::tanh());
  const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-3.0}), vec({3.0}), 1e-2));
  REQUIRE(sm.branches.size() == 2);
  REQUIRE(sm.asymptotes.size() == 2);
  for (const auto& a : sm.asymptotes) CHECK(a.lambda0 == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(sm.asymptotes[0].side != sm.asymptotes[1].side);
  bool found = false;
  for (const auto& br : sm.branches) {
    for (const auto& e : reduced_equilibria(sf, br)) {
      if (std::abs(e.x[0] + 2.0) < 1e-6) {
        found = true;
        CHECK(std::abs(e.lambda) < 1e-6);
        CHECK(e.type == EquilibriumType::Degenerate);
      }
    }
  }
  CHECK(found);
}

TEST_CASE("two-dimensional slow manifolds: saddles") {
  SUBCASE("lambda = 0 plane") {
    const auto sf = build_slow_fast(ex10(), TransitionFunction::tanh());
    const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-2.0, -2.0}), vec({2.0, 2.0}), 0.1));
    REQUIRE(sm.branches.size() == 1);
    CHECK(sm.branches[0].nodes.size() == 41u * 41u);
    const auto eq = reduced_equilibria(sf, sm.branches[0]);
    REQUIRE(eq.size() == 1);
    CHECK((eq[0].x - vec({0.0, -1.0})).norm() < 1e-9);
    CHECK(eq[0].type == EquilibriumType::Saddle);
    REQUIRE(eq[0].eigenvalues.size() == 2);
    CHECK(real_part(eq[0].eigenvalues[0]) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(real_part(eq[0].eigenvalues[1]) == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("graph over x < 0") {
    const auto sf = build_slow_fast(ex11a(), TransitionFunction::tanh());
    const auto sm = trace_slow_manifold(sf, ScanGrid::with_step(vec({-1.9, -1.0}), vec({-0.1, 1.0}), 0.05));
    REQUIRE(sm.branches.size() == 1);
    const auto eq = reduced_equilibria(sf, sm.branches[0]);
    REQUIRE(eq.size() == 1);
    CHECK((eq[0].x - vec({-1.0, 0.0})).norm() < 1e-9);
    CHECK(eq[0].lambda == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(eq[0].type == EquilibriumType::Saddle);
    CHECK(real_part(eq[0].eigenvalues[0]) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(real_part(eq[0].eigenvalues[1]) == doctest::Approx(1.0).epsilon(1e-9));
  }
}
