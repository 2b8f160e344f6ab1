#pragma once

// Registry of normal forms and worked combinations, each with an oracle
// derived in closed form (or by an independent brute-force scan), and a
// runner that compares the numerical modules against it.

#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nlslide/dynamics.hpp"
#include "nlslide/psvf.hpp"
#include "nlslide/sliding.hpp"
#include "nlslide/slowfast.hpp"

namespace nlslide {

/// Open interval of the first Sigma axis with a constant branch count.
struct CountInterval {
  double lo = 0.0;
  double hi = 0.0;
  int branches = 0;
};

enum class ManifoldShape { Empty, Lines, GraphOverTheta, GraphOverSigma, AsymptoticPair };
std::string to_string(ManifoldShape s);

/// Expected node: negative tolerance fields are not checked.
struct ExpectedNode {
  double theta = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;  // first slow coordinate
  double tol = 1e-6;
};

struct ExpectedEquilibrium {
  Vec x;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  EquilibriumType type = EquilibriumType::Degenerate;
  std::vector<double> eigenvalues;  // real parts, ascending; empty: not checked
  double tol = 1e-6;
  double eig_tol = 1e-9;
};

struct DesignatedRun {
  Vec p0;
  double T = 1.0;
  BranchPolicy policy;
  std::optional<Vec> final_state;  // closed-form hybrid end state
  double final_tol = 1e-9;
  std::vector<double> eps = {1e-2, 1e-3, 1e-4};
  bool strictly_decreasing = false;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double deviation = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct Fixture;

/// Computed objects shared by the checks of one fixture.
struct FixtureAnalysis {
  ScanResult scan;
  std::optional<SlowFastSystem> slow_fast;
  SlowManifold manifold;
  std::vector<ReducedEquilibrium> equilibria;
};

using ExtraCheck = std::function<CheckResult(const Fixture&, const FixtureAnalysis&)>;

struct Oracle {
  std::vector<CountInterval> sliding_intervals;  // count 0 elsewhere
  std::vector<double> boundaries;                // where the count changes
  std::vector<std::pair<double, double>> refined;  // boundary and refinement tolerance
  ManifoldShape shape = ManifoldShape::Empty;
  std::vector<double> line_lambdas;              // Lines: psi(theta_i), ascending
  std::vector<ExpectedNode> tangency_ends;
  std::vector<ExpectedNode> non_hyperbolic;      // the complete list
  std::vector<double> asymptotes;                // psi(theta_0) of each asymptote
  std::vector<ExpectedEquilibrium> equilibria;   // the complete list
  /// Expected sign of the first reduced-flow component at a slow-manifold
  /// point; 0 skips the point.
  std::function<int(double lambda, const Vec& x)> flow_sign;
  std::vector<std::pair<std::string, ExtraCheck>> extra;
  std::optional<DesignatedRun> run;

  int expected_count(double x) const;
};

struct Fixture {
  std::string id;
  std::string title;
  ContinuousCombination combination;
  ScanGrid sigma_grid;  // region scan
  ScanGrid slow_grid;   // slow-manifold tracing
  Oracle oracle;
};

std::vector<std::string> fixture_ids();
/// Throws Error("catalog", ...) for an unknown id.
Fixture fixture(const std::string& id);

/// Sewing normal form X+ = (a, b), X- = (c, d) with corrections P(lambda), Q(lambda).
Fixture sewing_fixture(double a, double b, double c, double d, const Expression& P, const Expression& Q);
/// Saddle normal form with X~ = (P + x, -lambda + Q - y).
Fixture saddle_fixture(const std::string& id, const Expression& P, const Expression& Q);
/// Saddle-node normal form with X~ = (P - (1 + lambda) x^2 / 2, -lambda + Q).
Fixture saddle_node_fixture(const Expression& P, const Expression& Q);

/// Planar combination with h = y, random quadratic X+- and a random
/// polynomial correction vanishing at lambda = +-1.
ContinuousCombination random_combination(std::uint64_t seed);

struct FixtureReport {
  std::string id;
  std::string title;
  bool pass = true;
  double seconds = 0.0;
  std::vector<CheckResult> checks;
};

FixtureReport run_fixture(const Fixture& f);
FixtureReport run_fixture(const std::string& id);

std::string report_text(const FixtureReport& r);
/// One report as a JSON object (schema in the README).
std::string report_json(const FixtureReport& r, int indent = 2);
/// Several reports: {"pass": bool, "fixtures": [...]}.
std::string reports_json(const std::vector<FixtureReport>& rs, int indent = 2);

/// Fixed point of X^eps near a reduced equilibrium.
struct PerturbedEquilibrium {
  ReducedEquilibrium reduced;
  Vec seed;  // blow-down of (theta*, x*) at this eps
  Vec point;
  bool converged = false;
  std::vector<std::complex<double>> eigenvalues;  // ascending real part
  bool saddle_or_repelling = false;               // signs (-, +) or (+, +)
};

/// Newton on X^eps from the blow-down of each hyperbolic reduced equilibrium
/// of a planar fixture.
std::vector<PerturbedEquilibrium> perturbed_equilibria(const Fixture& f, double eps,
                                                       const TransitionFunction& phi = TransitionFunction::tanh());

}  // namespace nlslide
