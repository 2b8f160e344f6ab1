#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "nlslide/errors.hpp"
#include "nlslide/sliding.hpp"

using namespace nlslide;
using testing::exprs;
using testing::planar;
using testing::vec;

namespace {

ContinuousCombination example1() {
  return ContinuousCombination::from_components(planar({"1", "1-x"}, {"1", "3-x"}),
                                                exprs({"-1+2*lambda^2", "-lambda+2*lambda^2-x"}));
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "(%.17g)", v);
  return buf;
}

}  // namespace

TEST_CASE("classical classification of the fold normal form") {
  const auto fold = planar({"1", "x"}, {"1", "1"});
  CHECK(classify(fold, vec({-1.0, 0.0})).kind == PointKind::Sliding);
  CHECK(classify(fold, vec({1.0, 0.0})).kind == PointKind::Sewing);
  const auto s = classify(fold, vec({0.0, 0.0}));
  CHECK(s.kind == PointKind::Singular);
  CHECK(s.plus_tangent);
  CHECK(s.label() == "singular+");
  CHECK_THROWS_AS(classify(fold, vec({0.0, 0.1})), NotOnManifold);
}

TEST_CASE("lambda roots of Example 1") {
  const auto c = example1();
  auto roots = lambda_roots(c, vec({0.0, 0.0}));
  REQUIRE(roots.size() == 2);
  CHECK(std::abs(roots[0].lambda) < 1e-13);
  CHECK(std::abs(roots[1].lambda - 0.5) < 1e-13);
  CHECK(roots[0].transversal);
  CHECK(roots[1].transversal);

  roots = lambda_roots(c, vec({-0.125, 0.0}));
  REQUIRE(roots.size() == 1);
  CHECK(std::abs(roots[0].lambda - 0.25) < 1e-9);
  CHECK_FALSE(roots[0].transversal);

  roots = lambda_roots(c, vec({2.0, 0.0}));
  REQUIRE(roots.size() == 1);
  CHECK(std::abs(roots[0].lambda - (1.0 - std::sqrt(17.0)) / 4.0) < 1e-13);

  // just left of the fold the pair is still resolved
  roots = lambda_roots(c, vec({-0.125 + 1e-7, 0.0}));
  REQUIRE(roots.size() == 2);
  const double d = std::sqrt(1.0 + 8.0 * (-0.125 + 1e-7));
  CHECK(std::abs(roots[0].lambda - (1.0 - d) / 4.0) < 1e-10);
  CHECK(std::abs(roots[1].lambda - (1.0 + d) / 4.0) < 1e-10);

  // at x = 1 the second root sits on lambda = 1 (tangency of X+)
  roots = lambda_roots(c, vec({1.0, 0.0}));
  REQUIRE(roots.size() == 2);
  CHECK(roots[1].endpoint);
  CHECK(roots[1].lambda == 1.0);
  CHECK(interior_roots(roots).size() == 1);
}

TEST_CASE("nonlinear classification") {
  const auto c = example1();
  CHECK(nonlinear_classify(c, vec({-1.0, 0.0})).kind == NonlinearKind::Sewing);
  const auto nl = nonlinear_classify(c, vec({0.0, 0.0}));
  CHECK(nl.kind == NonlinearKind::Sliding);
  CHECK(nl.n_branches() == 2);
  const ContinuousCombination lin(c.base());
  const auto l2 = nonlinear_classify(lin, vec({2.0, 0.0}));
  CHECK(l2.n_branches() == 1);
  CHECK(classify(lin.base(), vec({2.0, 0.0})).kind == PointKind::Sliding);
}

TEST_CASE("sliding vector fields") {
  const auto c = example1();
  CHECK((sliding_field(c, vec({0.0, 0.0}), 0) - vec({-1.0, 0.0})).norm() < 1e-10);
  CHECK((sliding_field(c, vec({0.0, 0.0}), 1) - vec({-0.5, 0.0})).norm() < 1e-10);
  CHECK_THROWS_AS(sliding_field(c, vec({0.0, 0.0}), 2), Error);
  for (double x : {-0.1, 0.3, 0.9}) {
    const double s = std::sqrt(1 + 8 * x);
    CHECK((sliding_field(c, vec({x, 0.0}), 0) - vec({(-3 + 4 * x - s) / 4, 0.0})).norm() < 1e-10);
    CHECK((sliding_field(c, vec({x, 0.0}), 1) - vec({(-3 + 4 * x + s) / 4, 0.0})).norm() < 1e-10);
  }

  const PiecewiseSystem s11({"x", "y", "z"}, parse("z"), exprs({"1", "0", "x"}), exprs({"0", "0", "1"}));
  const auto ex11 = ContinuousCombination(
      s11, exprs({"(lambda^2-1)*(-2+2*x+x^2-x^3)/(4*x)", "(lambda^2-1)*(y-2*x*y+x^2*y)/(4*x)", "0"}));
  CHECK((sliding_field(ex11, vec({-2.0, 1.0, 0.0}), 0) - vec({1.0, 1.0, 0.0})).norm() < 1e-10);

  const PiecewiseSystem s10({"x", "y", "z"}, parse("z"), exprs({"0", "0", "-1"}), exprs({"0", "1", "1"}));
  const auto ex10 = ContinuousCombination::from_components(
      s10, exprs({"x*(lambda^2-1)", "1/2-lambda/2-y/2*(lambda^2-1)", "-lambda^3"}));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const double x = coord(rng);
    const double y = coord(rng);
    const auto roots = lambda_roots(ex10, vec({x, y, 0.0}));
    REQUIRE(roots.size() == 1);
    CHECK_FALSE(roots[0].transversal);
    CHECK((sliding_field(ex10, vec({x, y, 0.0}), 0) - vec({-x, 0.5 + y / 2, 0.0})).norm() < 1e-9);
  }
}

TEST_CASE("zero correction recovers the Filippov parameter") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  int checked = 0;
  for (int k = 0; k < 30; ++k) {
    const std::string a = num(coef(rng)), b = num(coef(rng)), cc = num(coef(rng)), d = num(coef(rng));
    const auto sys = planar({"1", (a + "+" + b + "*x").c_str()}, {"x", (cc + "+" + d + "*x^2").c_str()});
    const ContinuousCombination lin(sys);
    for (int j = 0; j < 20; ++j) {
      const Vec p = vec({coef(rng), 0.0});
      if (classify(sys, p).kind != PointKind::Sliding) continue;
      const auto roots = lambda_roots(lin, p);
      REQUIRE(roots.size() == 1);
      CHECK(std::abs(roots[0].lambda - filippov_lambda(sys, p)) < 1e-10);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("root completeness against polynomials with known roots") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unit(-0.97, 0.97);
  std::uniform_real_distribution<double> pos(0.05, 2.0);
  for (int k = 0; k < 200; ++k) {
    const int real_roots = 1 + static_cast<int>(rng() % 4);
    std::vector<double> r;
    while (static_cast<int>(r.size()) < real_roots) {
      const double v = unit(rng);
      bool ok = true;
      for (double w : r) ok = ok && std::abs(v - w) > 0.01;
      if (ok) r.push_back(v);
    }
    std::sort(r.begin(), r.end());
    std::string poly = num(pos(rng) * (rng() % 2 ? 1 : -1));
    for (double v : r) poly += "*(lambda-" + num(v) + ")";
    if (real_roots <= 2) poly += "*(lambda^2+" + num(pos(rng)) + ")";
    const Expression g = parse(poly);
    const double gp = g.evaluate({{"lambda", 1.0}});
    const double gm = g.evaluate({{"lambda", -1.0}});
    const auto sys = planar({"1", num(gp).c_str()}, {"1", num(gm).c_str()});
    const auto c = ContinuousCombination::from_components(sys, {parse("1"), g});
    const auto roots = lambda_roots(c, vec({0.3, 0.0}));
    REQUIRE(roots.size() == r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(std::abs(roots[i].lambda - r[i]) < 1e-10);
      CHECK(roots[i].transversal);
    }
  }
  // double root (even multiplicity) is found and flagged
  const auto sys = planar({"1", num(0.49).c_str()}, {"1", num(1.69).c_str()});
  const auto c = ContinuousCombination::from_components(sys, {parse("1"), parse("(lambda-0.3)^2")});
  const auto roots = lambda_roots(c, vec({0.0, 0.0}));
  REQUIRE(roots.size() == 1);
  CHECK(std::abs(roots[0].lambda - 0.3) < 1e-6);
  CHECK_FALSE(roots[0].transversal);
}

TEST_CASE("region scan of Example 1") {
  const auto c = example1();
  const auto res = region_scan(c, ScanGrid::with_step(vec({-1.0}), vec({4.0}), 1e-3));
  REQUIRE(res.points.size() == 5001);
  CHECK(res.max_branches == 2);
  for (const auto& sp : res.points) {
    REQUIRE(sp.valid);
    const double x = sp.x[0];
    const int n = sp.nl.n_branches();
    if (x < -0.125 - 1e-9) CHECK(n == 0);
    if (x > -0.125 + 1e-9 && x < 1 - 1e-9) CHECK(n == 2);
    if (x > 1 + 1e-9 && x < 3 - 1e-9) CHECK(n == 1);
    if (x > 3 + 1e-9) CHECK(n == 0);
  }
  REQUIRE(res.boundaries.size() == 3);
  CHECK(std::abs(res.boundaries[0].x[0] + 0.125) < 1e-9);
  CHECK(res.boundaries[0].kind == BoundaryKind::Fold);
  CHECK(res.boundaries[0].n_before == 0);
  CHECK(res.boundaries[0].n_after == 2);
  CHECK(std::abs(res.boundaries[1].x[0] - 1.0) < 1e-9);
  CHECK(res.boundaries[1].kind == BoundaryKind::TangencyPlus);
  CHECK(std::abs(res.boundaries[2].x[0] - 3.0) < 1e-9);
  CHECK(res.boundaries[2].kind == BoundaryKind::TangencyMinus);
}

TEST_CASE("region scans of sewing and Example 3") {
  const ContinuousCombination sew(planar({"1", "1"}, {"1", "1"}));
  const auto rs = region_scan(sew, ScanGrid::with_step(vec({-2.0}), vec({2.0}), 0.01));
  for (const auto& sp : rs.points) {
    CHECK(sp.cls.kind == PointKind::Sewing);
    CHECK(sp.nl.kind == NonlinearKind::Sewing);
  }
  CHECK(rs.boundaries.empty());

  const auto ex3 = ContinuousCombination::from_components(
      planar({"1", "-1"}, {"2", "-1"}), exprs({"1/2-lambda/2+lambda^2", "1-lambda-2*lambda^2+lambda^3"}));
  const auto r3 = region_scan(ex3, ScanGrid::with_step(vec({-2.0}), vec({2.0}), 0.01));
  for (const auto& sp : r3.points) {
    CHECK(sp.cls.kind == PointKind::Sewing);
    CHECK(sp.nl.n_branches() == 2);
  }
}

TEST_CASE("region scan in three dimensions marks invalid points") {
  const PiecewiseSystem s11({"x", "y", "z"}, parse("z"), exprs({"1", "0", "x"}), exprs({"0", "0", "1"}));
  const auto ex11 = ContinuousCombination(
      s11, exprs({"(lambda^2-1)*(-2+2*x+x^2-x^3)/(4*x)", "(lambda^2-1)*(y-2*x*y+x^2*y)/(4*x)", "0"}));
  const auto res = region_scan(ex11, ScanGrid::with_step(vec({-1.0, -1.0}), vec({1.0, 1.0}), 0.1));
  for (const auto& sp : res.points) {
    REQUIRE(sp.valid);  // g only involves the third component, regular at x = 0
    CHECK(sp.nl.n_branches() == (sp.x[0] < 0 ? 1 : 0));
  }

  const ContinuousCombination singular(planar({"1", "-1"}, {"1", "1"}), exprs({"0", "(lambda^2-1)/x"}));
  const auto r2 = region_scan(singular, ScanGrid::with_step(vec({-1.0}), vec({1.0}), 0.1));
  int invalid = 0;
  for (const auto& sp : r2.points) {
    if (!sp.valid) {
      ++invalid;
      CHECK(sp.x[0] == 0.0);
      CHECK(sp.error.find("division") != std::string::npos);
    }
  }
  CHECK(invalid == 1);
}

TEST_CASE("curved switching manifold") {
  // h = y - x^2; sliding where the fields point toward each other
  const PiecewiseSystem sys({"x", "y"}, parse("y - x^2"), exprs({"0", "-1"}), exprs({"0", "1"}));
  const ContinuousCombination lin(sys);
  const auto res = region_scan(lin, ScanGrid::with_step(vec({-1.0}), vec({1.0}), 0.5));
  for (const auto& sp : res.points) {
    CHECK(std::abs(sp.p[1] - sp.x[0] * sp.x[0]) < 1e-12);
    CHECK(sp.nl.n_branches() == 1);
    const Vec f = sliding_field(lin, sp.p, 0);
    CHECK(std::abs(f.dot(sys.grad_h(sp.p))) < 1e-10);
  }
}
