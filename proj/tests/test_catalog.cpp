#include <cmath>
#include <set>

#include <json.hpp>

#include "doctest.h"
#include "helpers.hpp"
#include "nlslide/catalog.hpp"
#include "nlslide/errors.hpp"

using namespace nlslide;
using nlslide::testing::vec;

namespace {

const CheckResult* find_check(const FixtureReport& r, const std::string& prefix) {
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("registry holds every normal form and worked example") {
  const auto ids = fixture_ids();
  const std::set<std::string> have(ids.begin(), ids.end());
  for (const char* id : {"sewing", "saddle", "saddle_smallp", "fold", "saddle_node", "elliptical_fold", "hyperbolic_fold",
                         "parabolic_fold", "ex1", "ex2", "ex3", "ex4", "ex5", "ex6", "ex7", "ex8", "ex9", "ex10", "ex11",
                         "ex11b", "pwconst"}) {
    CHECK(have.count(id) == 1);
  }
  CHECK_THROWS_AS(fixture("ex12"), Error);
  try {
    fixture("nope");
  } catch (const Error& e) {
    CHECK(e.category() == "catalog");
  }
}

TEST_CASE("oracle contents") {
  const auto ex1 = fixture("ex1");
  REQUIRE(ex1.oracle.sliding_intervals.size() == 2);
  CHECK(ex1.oracle.sliding_intervals[0].lo == -0.125);
  CHECK(ex1.oracle.sliding_intervals[0].branches == 2);
  CHECK(ex1.oracle.sliding_intervals[1].branches == 1);
  CHECK(ex1.oracle.expected_count(0.5) == 2);
  CHECK(ex1.oracle.expected_count(2.0) == 1);
  CHECK(ex1.oracle.expected_count(3.5) == 0);

  const auto ex6 = fixture("ex6");
  CHECK(ex6.oracle.shape == ManifoldShape::Lines);
  REQUIRE(ex6.oracle.line_lambdas.size() == 1);
  CHECK(ex6.oracle.line_lambdas[0] < 0.0);  // theta0 in (pi/2, pi)
  CHECK(ex6.oracle.flow_sign(ex6.oracle.line_lambdas[0], vec({0.3})) == -1);

  // ex3: the brute-force cubic roots sit either side of zero
  const auto ex3 = fixture("ex3");
  REQUIRE(ex3.oracle.line_lambdas.size() == 2);
  for (double l : ex3.oracle.line_lambdas) CHECK(std::abs(1 - l - 2 * l * l + l * l * l) < 1e-12);

  const auto sn = fixture("saddle_node");
  REQUIRE(sn.oracle.equilibria.size() == 2);
  CHECK(std::abs(std::abs(sn.oracle.equilibria[0].x[0]) - std::sqrt(2.0)) < 1e-9);
}

TEST_CASE("sewing normal form validation and roots") {
  CHECK_THROWS_AS(sewing_fixture(1, 1, 2, -1, Expression::number(0), Expression::number(0)), ModelError);
  CHECK_THROWS_AS(sewing_fixture(0, 1, 2, 1, Expression::number(0), Expression::number(0)), ModelError);
  // Delta = 1 + 2 lambda^2 - 2 has roots +-1/sqrt(2)
  const auto f = sewing_fixture(1, 1, 2, 1, Expression::number(0), parse("2*lambda^2-2"));
  REQUIRE(f.oracle.line_lambdas.size() == 2);
  CHECK(std::abs(f.oracle.line_lambdas[1] - 1 / std::sqrt(2.0)) < 1e-12);
  CHECK(run_fixture(f).pass);
}

TEST_CASE("random combinations satisfy the endpoint identity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = random_combination(seed);
    for (double x : {-1.5, 0.0, 0.7}) {
      const Vec p = vec({x, 0.3});
      CHECK((c.eval(1.0, p) - c.base().plus(p)).norm() < 1e-12);
      CHECK((c.eval(-1.0, p) - c.base().minus(p)).norm() < 1e-12);
    }
  }
  CHECK(random_combination(3).eval(0.2, vec({0.1, 0.1})) == random_combination(3).eval(0.2, vec({0.1, 0.1})));
}

TEST_CASE("every fixture passes its oracle") {
  for (const auto& id : fixture_ids()) {
    SUBCASE(id.c_str()) {
      const auto r = run_fixture(id);
      INFO(report_text(r));
      CHECK(r.pass);
      CHECK(r.checks.size() >= 5);
    }
  }
}

TEST_CASE("ex1 report locates the boundaries") {
  const auto r = run_fixture("ex1");
  const auto* b = find_check(r, "boundaries");
  REQUIRE(b != nullptr);
  CHECK(b->pass);
  CHECK(b->detail.find("3 found") != std::string::npos);
  const auto* refined = find_check(r, "refined boundary");
  REQUIRE(refined != nullptr);
  CHECK(refined->deviation <= 1e-9);
}

TEST_CASE("a wrong oracle is reported as a failure") {
  auto f = fixture("ex4");
  f.oracle.equilibria[0].type = EquilibriumType::Attracting;
  const auto r = run_fixture(f);
  CHECK_FALSE(r.pass);
  const auto* eq = find_check(r, "reduced equilibria");
  REQUIRE(eq != nullptr);
  CHECK_FALSE(eq->pass);
  CHECK(eq->detail.find("repelling") != std::string::npos);
}

TEST_CASE("json report schema") {
  const auto r = run_fixture("pwconst");
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["id"] == "pwconst");
  CHECK(j["pass"] == true);
  REQUIRE(j["checks"].is_array());
  for (const auto& c : j["checks"]) {
    CHECK(c.contains("name"));
    CHECK(c["pass"].is_boolean());
    CHECK((c["deviation"].is_number() || c["deviation"].is_null()));
    CHECK(c.contains("tolerance"));
    CHECK(c["detail"].is_string());
  }
  FixtureReport bad = r;
  bad.pass = false;
  bad.checks.push_back({"synthetic", false, std::numeric_limits<double>::infinity(), 0.0, ""});
  const auto all = nlohmann::json::parse(reports_json({r, bad}));
  CHECK(all["pass"] == false);
  CHECK(all["fixtures"].size() == 2);
  CHECK(all["fixtures"][1]["checks"].back()["deviation"].is_null());
}

TEST_CASE("perturbed equilibria near hyperbolic reduced equilibria") {
  const auto pe = perturbed_equilibria(fixture("saddle_smallp"), 1e-3);
  REQUIRE(pe.size() == 1);
  CHECK(pe[0].converged);
  CHECK(pe[0].saddle_or_repelling);
  REQUIRE(pe[0].eigenvalues.size() == 2);
  CHECK(pe[0].eigenvalues[0].real() < 0);
  CHECK(pe[0].eigenvalues[1].real() > 0);
  CHECK(std::abs(pe[0].point[0] - pe[0].reduced.x[0]) < 1e-3);
  CHECK_THROWS_AS(perturbed_equilibria(fixture("ex10"), 1e-3), ModelError);
}
