#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "nlslide/dynamics.hpp"
#include "nlslide/errors.hpp"

using namespace nlslide;
using nlslide::testing::exprs;
using nlslide::testing::planar;
using nlslide::testing::vec;

namespace {

ContinuousCombination ex1() {
  return ContinuousCombination::from_components(planar({"1", "1-x"}, {"1", "3-x"}),
                                                exprs({"-1+2*lambda^2", "-lambda+2*lambda^2-x"}));
}

ContinuousCombination analytic() { return ContinuousCombination(planar({"1", "-1"}, {"0", "1"})); }

void check_events_on_sigma(const Trajectory& tr, const PiecewiseSystem& sys) {
  for (const auto& e : tr.events()) CHECK(std::abs(sys.h_value(e.state)) < 1e-12);
}

void check_confined(const Trajectory& tr, const PiecewiseSystem& sys) {
  for (const auto& s : tr.samples()) {
    const auto& seg = tr.segment_at(s.t);
    if (seg.regime == Regime::SlidingBranch && s.t > seg.t_start) CHECK(std::abs(sys.h_value(s.state)) < 1e-9);
  }
}

void check_increasing(const Trajectory& tr) {
  for (std::size_t i = 1; i < tr.samples().size(); ++i) REQUIRE(tr.samples()[i].t > tr.samples()[i - 1].t);
}

}  // namespace

TEST_CASE("smooth integration examples") {
  const auto lin = integrate_smooth([](const Vec&) { return vec({1, 1}); }, vec({0, 0}), 2.0);
  CHECK((lin.final_state() - vec({2, 2})).norm() < 1e-9);
  CHECK(lin.segments().size() == 1);
  check_increasing(lin);

  const auto ex4 = integrate_smooth([](const Vec& p) { return vec({p[0], -1 - p[1]}); }, vec({1, 1}), 1.0);
  CHECK(std::abs(ex4.final_state()[0] - std::exp(1.0)) < 1e-7);
  CHECK(std::abs(ex4.final_state()[1] - (2 * std::exp(-1.0) - 1)) < 1e-7);

  const auto harm = integrate_smooth([](const Vec& p) { return vec({p[1], -p[0]}); }, vec({1, 0}), 2 * std::numbers::pi);
  CHECK((harm.final_state() - vec({1, 0})).norm() < 1e-6);
  // dense samples interpolate the circle
  for (double t : {0.3, 1.1, 2.9, 5.0}) CHECK((harm.state_at(t) - vec({std::cos(t), -std::sin(t)})).norm() < 1e-6);
}

TEST_CASE("time reversal returns to the start") {
  IntegratorConfig cfg;
  auto f = [](const Vec& p) { return vec({p[1], -std::sin(p[0])}); };
  const Vec p0 = vec({0.4, -0.3});
  const auto fwd = integrate_smooth(f, p0, 3.0, cfg);
  const auto back = integrate_smooth(f, fwd.final_state(), -3.0, cfg);
  check_increasing(back);
  CHECK(back.t_start() == doctest::Approx(-3.0));
  CHECK((back.samples().front().state - p0).norm() < 100 * (cfg.atol + cfg.rtol));
}

TEST_CASE("regularized field equals X+ away from the layer") {
  const auto c = ex1();
  const double eps = 1e-3;
  const auto reg = integrate_regularized(c, TransitionFunction::sharp(), eps, vec({0, 1}), 0.2);
  const auto plus = integrate_smooth([&](const Vec& p) { return c.base().plus(p); }, vec({0, 1}), 0.2);
  CHECK((reg.final_state() - plus.final_state()).norm() < 1e-9);
  CHECK(reg.segments().front().regime == Regime::Regularized);
  CHECK(reg.segments().front().eps == eps);
  CHECK(reg.warnings().empty());
  CHECK_FALSE(integrate_regularized(c, TransitionFunction::tanh(), 1e-15, vec({0, 1}), 1e-3).warnings().empty());
  CHECK_THROWS_AS(integrate_regularized(c, TransitionFunction::tanh(), 0.0, vec({0, 1}), 1.0), ModelError);
}

TEST_CASE("hybrid analytic fixture") {
  const auto c = analytic();
  const auto tr = integrate_filippov(c, vec({0, 1}), 3.0);
  check_increasing(tr);
  check_events_on_sigma(tr, c.base());
  check_confined(tr, c.base());
  REQUIRE(tr.segments().size() == 2);
  CHECK(tr.segments()[0].regime == Regime::Xplus);
  CHECK(tr.segments()[1].regime == Regime::SlidingBranch);
  CHECK(tr.segments()[1].branch == 0);
  REQUIRE(tr.events().size() == 1);
  CHECK(tr.events()[0].kind == EventKind::EnterSliding);
  CHECK(tr.events()[0].t == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((tr.events()[0].state - vec({1, 0})).norm() < 1e-12);
  CHECK((tr.final_state() - vec({2, 0})).norm() < 1e-10);
  CHECK((tr.state_at(2.0) - vec({1.5, 0})).norm() < 1e-10);
  CHECK((tr.state_at(0.5) - vec({0.5, 0.5})).norm() < 1e-10);
}

TEST_CASE("fold normal form exits sliding at the tangency") {
  const ContinuousCombination c(planar({"1", "x"}, {"1", "1"}));
  const auto tr = integrate_filippov(c, vec({-2, 0}), 3.0);
  check_events_on_sigma(tr, c.base());
  check_confined(tr, c.base());
  REQUIRE(tr.segments().size() == 2);
  CHECK(tr.segments()[0].regime == Regime::SlidingBranch);
  CHECK(tr.segments()[1].regime == Regime::Xplus);
  REQUIRE(tr.events().size() == 2);
  CHECK(tr.events()[1].kind == EventKind::ExitSliding);
  CHECK(std::abs(tr.events()[1].state[0]) < 1e-6);
  CHECK(tr.events()[1].t == doctest::Approx(2.0).epsilon(1e-6));
  // after exit: x = t - 2, y = (t-2)^2 / 2
  CHECK((tr.final_state() - vec({1, 0.5})).norm() < 1e-5);
}

TEST_CASE("sewing crossing gives two segments") {
  const ContinuousCombination c(planar({"1", "-1"}, {"1", "-2"}));
  const auto tr = integrate_filippov(c, vec({0, 1}), 2.0);
  REQUIRE(tr.segments().size() == 2);
  CHECK(tr.segments()[0].regime == Regime::Xplus);
  CHECK(tr.segments()[1].regime == Regime::Xminus);
  REQUIRE(tr.events().size() == 1);
  CHECK(tr.events()[0].kind == EventKind::Cross);
  CHECK((tr.final_state() - vec({2, -2})).norm() < 1e-9);
}

TEST_CASE("branch policies on a two-branch region") {
  const auto c = ex1();
  // start on Sigma at x = 0: roots 0 and 1/2
  CHECK_THROWS_AS(integrate_filippov(c, vec({0, 0}), 0.1, BranchPolicy::error()), AmbiguousBranch);
  CHECK_THROWS_AS(integrate_filippov(c, vec({0, 0}), 0.1, BranchPolicy::continuity()), AmbiguousBranch);
  CHECK_THROWS_AS(integrate_filippov(c, vec({0, 0}), 0.1, BranchPolicy::fixed(2)), AmbiguousBranch);

  // branch 0 (lambda = 0): x' = -1 + 2 lambda^2 with lambda_1(x) = (1 - sqrt(1+8x))/4
  const auto tr = integrate_filippov(c, vec({0, 0}), 0.05, BranchPolicy::continuity(0));
  check_confined(tr, c.base());
  CHECK(tr.segments().front().branch == 0);
  CHECK(tr.final_state()[0] < -0.04);
}

TEST_CASE("fold of the slow manifold: exit into X+") {
  const auto c = ex1();
  // branch 1 from x = 0 runs left (x' = -1/2 at x = 0) into the fold at x = -1/8
  const auto tr = integrate_filippov(c, vec({0, 0}), 1.0, BranchPolicy::fixed(1));
  check_events_on_sigma(tr, c.base());
  check_confined(tr, c.base());
  REQUIRE(tr.events().size() >= 2);
  CHECK(tr.events()[1].kind == EventKind::ExitSliding);
  CHECK(tr.events()[1].state[0] == doctest::Approx(-0.125).epsilon(1e-5));
  CHECK(tr.segments()[1].regime == Regime::Xplus);
  CHECK(tr.final_state()[1] > 0.0);
}

TEST_CASE("a branch leaving through lambda = +1 stops with reached_boundary") {
  const auto c = ex1();
  // branch 1 at x = 0.5 has x' = -1 + 2 lambda^2 > 0 and lambda -> 1 at x = 1
  const auto tr = integrate_filippov(c, vec({0.5, 0}), 3.0, BranchPolicy::fixed(1));
  REQUIRE_FALSE(tr.events().empty());
  CHECK(tr.events().back().kind == EventKind::ReachedBoundary);
  CHECK(tr.events().back().state[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(tr.stopped_early());
  CHECK(tr.t_end() < 3.0);
}

TEST_CASE("three-dimensional sliding with a degenerate root") {
  // lambda = 0 is a triple root of -lambda^3; sliding field (-x, 1/2 + y/2)
  PiecewiseSystem sys({"x", "y", "z"}, parse("z"), exprs({"0", "0", "-1"}), exprs({"0", "1", "1"}));
  const auto c = ContinuousCombination::from_components(
      sys, exprs({"x*(lambda^2-1)", "1/2-lambda/2-y/2*(lambda^2-1)", "-lambda^3"}));
  const auto tr = integrate_filippov(c, vec({1, 0, 0.5}), 2.0);
  check_confined(tr, c.base());
  REQUIRE(tr.segments().size() == 2);
  const double s = 1.5;  // sliding time after the hit at t = 0.5
  CHECK(tr.final_state()[0] == doctest::Approx(std::exp(-s)).epsilon(1e-7));
  CHECK(tr.final_state()[1] == doctest::Approx(std::exp(s / 2) - 1).epsilon(1e-7));
  CHECK(std::abs(tr.final_state()[2]) < 1e-12);
}

TEST_CASE("convergence harness on the analytic fixture") {
  const auto res = convergence_check(analytic(), TransitionFunction::tanh(), vec({0, 1}), 3.0, {1e-2, 1e-3, 1e-4});
  REQUIRE(res.rows.size() == 3);
  for (const auto& r : res.rows) CHECK_FALSE(r.failed);
  CHECK(res.rows[0].error < 5e-2);
  CHECK(res.rows[1].error < res.rows[0].error);
  CHECK(res.rows[2].error < res.rows[1].error);
  CHECK(res.slope_valid);
  CHECK(res.slope > 0.5);

  // a trajectory that never comes near Sigma: identical fields
  const auto far = convergence_check(ex1(), TransitionFunction::tanh(), vec({-1, 0.5}), 2.0, {1e-2, 1e-3, 1e-4});
  for (const auto& r : far.rows) CHECK(r.error < 1e-8);

  CHECK_THROWS_AS(convergence_check(analytic(), TransitionFunction::tanh(), vec({0, 1}), 3.0, {1e-2, 1e-3}), ConfigError);
}
