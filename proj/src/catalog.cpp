#include "nlslide/catalog.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "nlslide/errors.hpp"

namespace nlslide {

namespace {

constexpr double kPi = std::numbers::pi;
const double kInf = std::numeric_limits<double>::infinity();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

int sgn(double v, double tol = 1e-9) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

std::vector<Expression> parse_all(std::initializer_list<std::string> texts) {
  std::vector<Expression> out;
  for (const auto& t : texts) out.push_back(parse(t));
  return out;
}

PiecewiseSystem planar(const std::string& p1, const std::string& p2, const std::string& m1, const std::string& m2) {
  return {{"x", "y"}, parse("y"), parse_all({p1, p2}), parse_all({m1, m2})};
}

ScanGrid grid1(double lo, double hi, double step) { return ScanGrid::with_step(vec({lo}), vec({hi}), step); }

ScanGrid grid2(double x0, double x1, double y0, double y1, double step) {
  return ScanGrid::with_step(vec({x0, y0}), vec({x1, y1}), step);
}

// Independent dense scan for zeros of a function of lambda on (-1, 1):
// sign changes over 2e5 samples refined by bisection.
std::vector<double> brute_roots(const std::function<double(double)>& f) {
  constexpr int N = 200000;
  std::vector<double> out;
  double a = -1.0 + 1e-9, fa = f(a);
  for (int i = 1; i <= N; ++i) {
    const double b = -1.0 + 1e-9 + (2.0 - 2e-9) * i / N;
    const double fb = f(b);
    if (fa == 0.0) {
      out.push_back(a);
    } else if ((fa < 0) != (fb < 0) && fb != 0.0) {
      double lo = a, hi = b, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0) == (flo < 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.push_back(0.5 * (lo + hi));
    }
    a = b;
    fa = fb;
  }
  return out;
}

double eval_lambda(const Expression& e, double l) { return e.evaluate({{"lambda", l}}); }

Fixture make_fixture(std::string id, std::string title, ContinuousCombination c, ScanGrid sigma, ScanGrid slow) {
  return Fixture{std::move(id), std::move(title), std::move(c), std::move(sigma), std::move(slow), {}};
}

CheckResult check(std::string name, bool pass, double dev, double tol, std::string detail = {}) {
  return {std::move(name), pass, dev, tol, std::move(detail)};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// --- extra checks ------------------------------------------------------------

ExtraCheck sliding_fields_at(Vec p, std::vector<Vec> expected, double tol) {
  return [p = std::move(p), expected = std::move(expected), tol](const Fixture& f, const FixtureAnalysis&) {
    const auto roots = interior_roots(lambda_roots(f.combination, p));
    if (roots.size() != expected.size()) {
      return check("sliding fields", false, kInf, tol,
                   std::to_string(roots.size()) + " branches, expected " + std::to_string(expected.size()));
    }
    double dev = 0.0;
    for (std::size_t k = 0; k < roots.size(); ++k) {
      dev = std::max(dev, (f.combination.eval(roots[k].lambda, p) - expected[k]).lpNorm<Eigen::Infinity>());
    }
    return check("sliding fields", dev <= tol, dev, tol);
  };
}

// Compares alpha0(0, theta, x) and beta(0, theta, x) with closed forms in psi.
ExtraCheck slow_fast_forms(std::function<double(double, const Vec&)> alpha,
                           std::function<Vec(double, const Vec&)> beta) {
  return [alpha = std::move(alpha), beta = std::move(beta)](const Fixture& f, const FixtureAnalysis& a) {
    const auto& sf = *a.slow_fast;
    const int m = sf.slow_dim();
    double dev = 0.0;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(0.05, kPi - 0.05), ux(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
      const double th = ut(rng);
      Vec x(m);
      for (int j = 0; j < m; ++j) x[j] = ux(rng);
      const double psi = sf.transition().psi(th);
      dev = std::max(dev, std::abs(sf.alpha0(0.0, th, x) - alpha(psi, x)));
      dev = std::max(dev, (sf.beta(0.0, th, x) - beta(psi, x)).lpNorm<Eigen::Infinity>());
    }
    (void)f;
    return check("slow-fast closed forms", dev <= 1e-12, dev, 1e-12);
  };
}

// Every node: lambda matches a closed-form root and the reduced flow a closed form.
ExtraCheck node_flows(std::string name, std::function<bool(double, const Vec&)> select,
                      std::function<double(const Vec&)> lambda_of, std::function<Vec(const Vec&)> flow) {
  return [=](const Fixture&, const FixtureAnalysis& a) {
    double dev = 0.0;
    int used = 0;
    for (const auto& br : a.manifold.branches) {
      for (const auto& n : br.nodes) {
        if (!select(n.lambda, n.x)) continue;
        ++used;
        dev = std::max(dev, std::abs(n.lambda - lambda_of(n.x)));
        dev = std::max(dev, (a.slow_fast->beta(0.0, n.theta, n.x) - flow(n.x)).lpNorm<Eigen::Infinity>());
      }
    }
    return check(name, used > 0 && dev <= 1e-9, dev, 1e-9, std::to_string(used) + " nodes");
  };
}

// --- registry --------------------------------------------------------------

Fixture fold_fixture() {
  auto f = make_fixture("fold", "fold normal form, zero correction",
                        ContinuousCombination(planar("1", "x", "1", "1")), grid1(-3, 1, 1e-3), grid1(-3, 1, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::GraphOverTheta;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}};
  o.flow_sign = [](double, const Vec&) { return 1; };
  o.run = DesignatedRun{vec({-2, 0}), 3.0, BranchPolicy::continuity(), vec({1, 0.5}), 1e-8};
  return f;
}

Fixture elliptical_fold_fixture() {
  auto f = make_fixture("elliptical_fold", "elliptical fold normal form, Q = 1 - lambda^2",
                        ContinuousCombination(planar("1", "-x", "-1", "-x"), parse_all({"0", "1-lambda^2"})),
                        grid1(-1, 2, 1e-3), grid1(-0.5, 1.5, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{0.0, 1.0, 2}};
  o.boundaries = {0.0, 1.0};
  o.shape = ManifoldShape::GraphOverTheta;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.non_hyperbolic = {{kNaN, 0.0, 1.0, 1e-6}};
  o.equilibria = {{vec({1.0}), 0.0, EquilibriumType::Degenerate, {}, 1e-6}};
  o.flow_sign = [](double l, const Vec&) { return sgn(l, 1e-6); };
  return f;
}

Fixture hyperbolic_fold_fixture() {
  auto f = make_fixture("hyperbolic_fold", "hyperbolic fold normal form, Q = lambda^2 - 1",
                        ContinuousCombination(planar("1", "x", "1", "-2*x"), parse_all({"0", "lambda^2-1"})),
                        grid1(-3, 3, 1e-3), grid1(-3, 3, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, kInf, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::AsymptoticPair;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.asymptotes = {1.0 / 3.0, 1.0 / 3.0};
  o.flow_sign = [](double, const Vec&) { return 1; };
  return f;
}

Fixture parabolic_fold_fixture() {
  auto f = make_fixture("parabolic_fold", "parabolic fold normal form, Q = lambda^2 - 1",
                        ContinuousCombination(planar("-1", "-x", "1", "2*x"), parse_all({"0", "lambda^2-1"})),
                        grid1(-3, 3, 1e-3), grid1(-3, 3, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, kInf, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::AsymptoticPair;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.asymptotes = {1.0 / 3.0, 1.0 / 3.0};
  // x = 2 (lambda^2 - 1) / (3 lambda - 1); lambda = 0 gives x = 2 with
  // x' = -lambda(x), dlambda/dx = 1/6
  o.equilibria = {{vec({2.0}), 0.0, EquilibriumType::Attracting, {-1.0 / 6.0}}};
  o.flow_sign = [](double l, const Vec&) { return -sgn(l, 1e-6); };
  return f;
}

Fixture ex1_fixture(bool slow_focus) {
  auto c = ContinuousCombination::from_components(planar("1", "1-x", "1", "3-x"),
                                                  parse_all({"-1+2*lambda^2", "-lambda+2*lambda^2-x"}));
  const double s2 = std::sqrt(2.0);
  auto f = slow_focus ? make_fixture("ex2", "quadratic combination: slow manifold between the tangencies", c,
                                     grid1(-1, 4, 1e-3), grid1(-0.125, 3, 1e-3))
                      : make_fixture("ex1", "quadratic combination of (1, 1-x) and (1, 3-x)", c, grid1(-1, 4, 1e-3),
                                     grid1(-1, 4, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-0.125, 1.0, 2}, {1.0, 3.0, 1}};
  o.boundaries = {-0.125, 1.0, 3.0};
  o.refined = {{-0.125, 1e-9}};
  o.shape = ManifoldShape::GraphOverTheta;
  o.tangency_ends = {{0.0, kNaN, 1.0, 1e-6}, {kPi, kNaN, 3.0, 1e-6}};
  o.non_hyperbolic = {{kNaN, 0.25, -0.125, 1e-6}};
  // on g = 2 l^2 - l - x: dl/dx = 1 / (4 l - 1), so d(x')/dx = 4 l / (4 l - 1)
  auto eig = [](double l) { return 4 * l / (4 * l - 1); };
  o.equilibria = {{vec({1 - s2 / 2}), 1 / s2, EquilibriumType::Repelling, {eig(1 / s2)}},
                  {vec({1 + s2 / 2}), -1 / s2, EquilibriumType::Repelling, {eig(-1 / s2)}}};
  o.flow_sign = [](double l, const Vec&) { return sgn(-1 + 2 * l * l); };
  if (slow_focus) {
    o.extra.push_back({"slow-fast closed forms",
                       slow_fast_forms([](double p, const Vec& x) { return -p + 2 * p * p - x[0]; },
                                       [](double p, const Vec&) { return vec({-1 + 2 * p * p}); })});
  } else {
    o.extra.push_back({"sliding fields at x = 0", sliding_fields_at(vec({0, 0}), {vec({-1, 0}), vec({-0.5, 0})}, 1e-10)});
  }
  return f;
}

Fixture ex3_fixture() {
  auto f = make_fixture("ex3",
                        "cubic combination of (1, -1) and (2, -1)",
                        ContinuousCombination::from_components(planar("1", "-1", "2", "-1"),
                                                               parse_all({"1/2-lambda/2+lambda^2", "1-lambda-2*lambda^2+lambda^3"})),
                        grid1(-2, 2, 1e-2), grid1(-2, 2, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, 2}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = brute_roots([](double l) { return 1 - l - 2 * l * l + l * l * l; });
  o.flow_sign = [](double, const Vec&) { return 1; };
  o.extra.push_back({"one line on each side of pi/2", [](const Fixture&, const FixtureAnalysis& a) {
                       int below = 0, above = 0;
                       for (const auto& br : a.manifold.branches) {
                         const double th = br.nodes.front().theta;
                         (th < kPi / 2 ? below : above)++;
                       }
                       return check("one line on each side of pi/2", below == 1 && above == 1, 0.0, 0.0,
                                    std::to_string(below) + " below, " + std::to_string(above) + " above");
                     }});
  return f;
}

Fixture ex4_fixture() {
  auto f = make_fixture("ex4", "saddle normal form, quadratic combination",
                        ContinuousCombination::from_components(planar("x", "-1-y", "x", "1-y"),
                                                               parse_all({"-1+lambda^2+x", "-1-lambda+lambda^2-y"})),
                        grid1(-2, 2, 1e-2), grid1(-2, 2, 1e-2));
  const double l0 = (1 - std::sqrt(5.0)) / 2;
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, 1}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = {l0};
  o.equilibria = {{vec({1 - l0 * l0}), l0, EquilibriumType::Repelling, {1.0}, 1e-9}};
  o.flow_sign = [l0](double, const Vec& x) { return sgn(x[0] + l0 * l0 - 1); };
  return f;
}

Fixture ex5_fixture() {
  auto f = make_fixture(
      "ex5", "fold normal form, quadratic combination",
      ContinuousCombination::from_components(planar("1", "x", "1", "1"),
                                             parse_all({"lambda^2", "-1/2-lambda/2+lambda^2+(lambda/2+1/2)*x"})),
      grid1(-3, 1.5, 1e-3), grid1(-3, 1.5, 1e-2));
  auto& o = f.oracle;
  // x = (1 - l)(1 + 2 l) / (1 + l): maximum x = 1 at l = 0
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, 1.0, 2}};
  o.boundaries = {0.0, 1.0};
  o.shape = ManifoldShape::GraphOverTheta;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}};
  o.non_hyperbolic = {{kNaN, 0.0, 1.0, 1e-6}};
  // x' = lambda^2 vanishes only at lambda = 0, which is the fold point
  o.equilibria = {{vec({1.0}), kNaN, EquilibriumType::Degenerate, {}, 1e-6}};
  o.flow_sign = [](double l, const Vec&) { return std::abs(l) < 1e-4 ? 0 : 1; };
  return f;
}

Fixture ex6_fixture() {
  auto f = make_fixture("ex6", "saddle-node normal form, quadratic combination",
                        ContinuousCombination::from_components(
                            planar("-x^2", "-1", "0", "1"), parse_all({"-1+lambda^2+(-1/2-lambda/2)*x^2", "-1-lambda+lambda^2"})),
                        grid1(-2, 2, 1e-2), grid1(-2, 2, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, 1}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = {(1 - std::sqrt(5.0)) / 2};
  o.flow_sign = [](double, const Vec&) { return -1; };
  return f;
}

Fixture ex7_fixture() {
  auto f = make_fixture("ex7", "elliptical fold normal form, quadratic combination",
                        ContinuousCombination::from_components(planar("1", "-x", "-1", "-x"),
                                                               parse_all({"-1+lambda+lambda^2", "-1-x+lambda^2"})),
                        grid1(-2, 1, 1e-3), grid1(-1.5, 0.5, 1e-2));
  const double l0 = (std::sqrt(5.0) - 1) / 2;
  auto& o = f.oracle;
  o.sliding_intervals = {{-1.0, 0.0, 2}};
  o.boundaries = {-1.0, 0.0};
  o.shape = ManifoldShape::GraphOverTheta;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.non_hyperbolic = {{kNaN, 0.0, -1.0, 1e-6}};
  // dl/dx = 1 / (2 l), so d(x')/dx = (1 + 2 l) / (2 l)
  o.equilibria = {{vec({l0 * l0 - 1}), l0, EquilibriumType::Repelling, {(1 + 2 * l0) / (2 * l0)}}};
  o.flow_sign = [](double l, const Vec&) { return sgn(-1 + l + l * l); };
  return f;
}

Fixture ex8_fixture() {
  auto f = make_fixture("ex8", "hyperbolic fold normal form, quadratic combination",
                        ContinuousCombination::from_components(planar("1", "x", "1", "-2*x"),
                                                               parse_all({"lambda^2", "-1+lambda^2+(-1/2+3*lambda/2)*x"})),
                        grid1(-3, 3, 1e-3), grid1(-3, 3, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, kInf, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::AsymptoticPair;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.asymptotes = {1.0 / 3.0, 1.0 / 3.0};
  // x' = lambda^2 vanishes at lambda = 0, x = -2 (second-order zero)
  o.equilibria = {{vec({-2.0}), 0.0, EquilibriumType::Degenerate, {}, 1e-6}};
  o.flow_sign = [](double l, const Vec&) { return std::abs(l) < 1e-4 ? 0 : 1; };
  return f;
}

Fixture ex9_fixture() {
  auto f = make_fixture("ex9", "parabolic fold normal form, quadratic combination",
                        ContinuousCombination::from_components(planar("-1", "-x", "1", "2*x"),
                                                               parse_all({"-1-lambda+lambda^2", "-1+lambda^2+(1/2-3*lambda/2)*x"})),
                        grid1(-3, 3, 1e-3), grid1(-3, 3, 1e-2));
  const double l0 = (1 - std::sqrt(5.0)) / 2;
  const double x0 = 2 * (1 - l0 * l0) / (1 - 3 * l0);
  const double dldx = -(0.5 - 1.5 * l0) / (2 * l0 - 1.5 * x0);
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, kInf, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::AsymptoticPair;
  o.tangency_ends = {{0.0, kNaN, 0.0, 1e-6}, {kPi, kNaN, 0.0, 1e-6}};
  o.asymptotes = {1.0 / 3.0, 1.0 / 3.0};
  o.equilibria = {{vec({x0}), l0, EquilibriumType::Attracting, {(-1 + 2 * l0) * dldx}}};
  o.flow_sign = [](double l, const Vec&) { return sgn(-1 - l + l * l); };
  return f;
}

PiecewiseSystem spatial(const std::string& p1, const std::string& p2, const std::string& p3, const std::string& m1,
                        const std::string& m2, const std::string& m3) {
  return {{"x", "y", "z"}, parse("z"), parse_all({p1, p2, p3}), parse_all({m1, m2, m3})};
}

Fixture ex10_fixture() {
  auto f = make_fixture("ex10", "spatial sewing with a cubic normal component",
                        ContinuousCombination::from_components(
                            spatial("0", "0", "-1", "0", "1", "1"),
                            parse_all({"x*(lambda^2-1)", "1/2-lambda/2-y/2*(lambda^2-1)", "-lambda-lambda*(lambda^2-1)"})),
                        grid2(-2, 2, -2, 2, 0.25), grid2(-2, 2, -2, 2, 0.25));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, 1}};
  o.shape = ManifoldShape::GraphOverSigma;
  o.equilibria = {{vec({0.0, -1.0}), 0.0, EquilibriumType::Saddle, {-1.0, 0.5}, 1e-9}};
  o.flow_sign = [](double, const Vec& x) { return -sgn(x[0]); };
  o.extra.push_back({"sliding field at the origin", sliding_fields_at(vec({0, 0, 0}), {vec({0, 0.5, 0})}, 1e-12)});
  o.extra.push_back({"slow-fast closed forms",
                     slow_fast_forms([](double p, const Vec&) { return -p * p * p; },
                                     [](double p, const Vec& x) {
                                       return vec({x[0] * (p * p - 1), (1 + x[1]) / 2 - p / 2 - x[1] * p * p / 2});
                                     })});
  o.extra.push_back({"slow manifold is theta = pi/2", [](const Fixture&, const FixtureAnalysis& a) {
                       double dev = 0.0;
                       for (const auto& br : a.manifold.branches)
                         for (const auto& n : br.nodes) dev = std::max(dev, std::abs(n.theta - kPi / 2));
                       return check("slow manifold is theta = pi/2", dev <= 1e-9, dev, 1e-9);
                     }});
  o.run = DesignatedRun{vec({1, 0, 0.5}), 2.0, BranchPolicy::continuity(), std::nullopt};
  o.run->final_state = vec({std::exp(-1.5), std::exp(0.75) - 1, 0.0});
  o.run->final_tol = 1e-7;
  return f;
}

Fixture ex11_fixture() {
  auto f = make_fixture(
      "ex11", "spatial fold-regular point, correction with sliding field (-x-1, y, 0)",
      ContinuousCombination(spatial("1", "0", "x", "0", "0", "1"),
                            parse_all({"(lambda^2-1)*(-2+2*x+x^2-x^3)/(4*x)", "(lambda^2-1)*(y-2*x*y+x^2*y)/(4*x)", "0"})),
      grid2(-2, 2, -1, 1, 0.1), grid2(-1.95, -0.05, -1, 1, 0.05));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, 0.0, 1}};
  o.boundaries = {0.0};
  o.shape = ManifoldShape::GraphOverSigma;
  o.equilibria = {{vec({-1.0, 0.0}), 0.0, EquilibriumType::Saddle, {-1.0, 1.0}, 1e-9}};
  o.flow_sign = [](double, const Vec& x) { return sgn(-x[0] - 1); };
  o.extra.push_back({"nodes on psi = (1+x)/(1-x) with flow (-x-1, y)",
                     node_flows(
                         "nodes on psi = (1+x)/(1-x) with flow (-x-1, y)", [](double, const Vec&) { return true; },
                         [](const Vec& x) { return (1 + x[0]) / (1 - x[0]); },
                         [](const Vec& x) { return vec({-x[0] - 1, x[1]}); })});
  return f;
}

Fixture ex11b_fixture() {
  auto f = make_fixture("ex11b", "spatial fold-regular point, correction with two sheets over x > 0",
                        ContinuousCombination(spatial("1", "0", "x", "0", "0", "1"),
                                              parse_all({"-(lambda^2-1)*(1+x)*(-1+y+x*y)/(4*x)", "(lambda^2-1)*(x+1)^2",
                                                         "(x+1)/2*(lambda^2-1)"})),
                        grid2(-2, 2, -1, 1, 0.1), grid2(-2, 1.9, -1, 1, 0.06));
  auto& o = f.oracle;
  // g = lambda ((x-1)/2 + (x+1)/2 lambda): roots 0 and (1-x)/(1+x); they meet at x = 1.
  // The slow grid lands on x = 1 and avoids x = 0, where the correction is singular.
  o.sliding_intervals = {{-kInf, 0.0, 1}, {0.0, 1.0, 2}, {1.0, kInf, 2}};
  o.boundaries = {0.0, 1.0};
  o.shape = ManifoldShape::GraphOverSigma;
  o.extra.push_back({"second sheet flow (y, -4x)",
                     node_flows(
                         "second sheet flow (y, -4x)",
                         [](double l, const Vec& x) { return x[0] > 0 && std::abs(l) > 1e-6; },
                         [](const Vec& x) { return (1 - x[0]) / (1 + x[0]); },
                         [](const Vec& x) { return vec({x[1], -4 * x[0]}); })});
  o.extra.push_back({"first sheet flow", node_flows(
                                             "first sheet flow", [](double l, const Vec&) { return std::abs(l) <= 1e-6; },
                                             [](const Vec&) { return 0.0; },
                                             [](const Vec& x) {
                                               return vec({0.5 + (1 + x[0]) * (-1 + x[1] + x[0] * x[1]) / (4 * x[0]),
                                                           -(1 + x[0]) * (1 + x[0])});
                                             })});
  return f;
}

Fixture pwconst_fixture() {
  auto f = make_fixture("pwconst", "piecewise-constant fields (1, -1) and (0, 1), zero correction",
                        ContinuousCombination(planar("1", "-1", "0", "1")), grid1(-2, 2, 1e-2), grid1(-2, 2, 1e-2));
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, 1}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = {0.0};
  o.flow_sign = [](double, const Vec&) { return 1; };
  o.run = DesignatedRun{vec({0, 1}), 3.0, BranchPolicy::continuity(), vec({2, 0}), 1e-9};
  o.run->strictly_decreasing = true;
  return f;
}

using Factory = std::function<Fixture()>;

const std::vector<std::pair<std::string, Factory>>& registry() {
  static const std::vector<std::pair<std::string, Factory>> r = {
      {"sewing", [] { return sewing_fixture(1, 1, 2, 1, Expression::number(0), Expression::number(0)); }},
      {"saddle", [] {
         auto f = saddle_fixture("saddle", parse("1-lambda^2"), Expression::number(0));
         f.oracle.run = DesignatedRun{vec({0, 1}), 1.0, BranchPolicy::continuity(), std::nullopt};
         return f;
       }},
      {"saddle_smallp", [] { return saddle_fixture("saddle_smallp", parse("(1-lambda^2)/10"), parse("(lambda^2-1)/2")); }},
      {"fold", fold_fixture},
      {"saddle_node", [] { return saddle_node_fixture(parse("1-lambda^2"), Expression::number(0)); }},
      {"elliptical_fold", elliptical_fold_fixture},
      {"hyperbolic_fold", hyperbolic_fold_fixture},
      {"parabolic_fold", parabolic_fold_fixture},
      {"ex1", [] { return ex1_fixture(false); }},
      {"ex2", [] { return ex1_fixture(true); }},
      {"ex3", ex3_fixture},
      {"ex4", ex4_fixture},
      {"ex5", ex5_fixture},
      {"ex6", ex6_fixture},
      {"ex7", ex7_fixture},
      {"ex8", ex8_fixture},
      {"ex9", ex9_fixture},
      {"ex10", ex10_fixture},
      {"ex11", ex11_fixture},
      {"ex11b", ex11b_fixture},
      {"pwconst", pwconst_fixture},
  };
  return r;
}

}  // namespace

std::string to_string(ManifoldShape s) {
  switch (s) {
    case ManifoldShape::Empty: return "empty";
    case ManifoldShape::Lines: return "lines";
    case ManifoldShape::GraphOverTheta: return "graph theta->x";
    case ManifoldShape::GraphOverSigma: return "graph x->theta";
    case ManifoldShape::AsymptoticPair: return "asymptotic pair";
  }
  return "?";
}

int Oracle::expected_count(double x) const {
  for (const auto& iv : sliding_intervals) {
    if (x > iv.lo && x < iv.hi) return iv.branches;
  }
  return 0;
}

std::vector<std::string> fixture_ids() {
  std::vector<std::string> out;
  for (const auto& [id, _] : registry()) out.push_back(id);
  return out;
}

Fixture fixture(const std::string& id) {
  for (const auto& [key, make] : registry()) {
    if (key == id) return make();
  }
  throw Error("catalog", "unknown fixture '" + id + "'");
}

Fixture sewing_fixture(double a, double b, double c, double d, const Expression& P, const Expression& Q) {
  if (a == 0 || b == 0 || c == 0 || d == 0 || !(b * d > 0)) {
    throw ModelError("sewing normal form needs nonzero a, b, c, d with b d > 0");
  }
  auto num = [](double v) { return Expression::number(v); };
  PiecewiseSystem sys({"x", "y"}, parse("y"), {num(a), num(b)}, {num(c), num(d)});
  auto f = make_fixture("sewing", "sewing normal form", ContinuousCombination(sys, {P, Q}), grid1(-2, 2, 1e-2),
                        grid1(-2, 2, 1e-2));
  const auto roots = brute_roots([&](double l) { return (b + d) / 2 + (b - d) / 2 * l + eval_lambda(Q, l); });
  auto& o = f.oracle;
  if (!roots.empty()) {
    o.sliding_intervals = {{-kInf, kInf, static_cast<int>(roots.size())}};
    o.shape = ManifoldShape::Lines;
    o.line_lambdas = roots;
  }
  o.flow_sign = [a, c, P](double l, const Vec&) { return sgn((a + c) / 2 + l * (a - c) / 2 + eval_lambda(P, l)); };
  return f;
}

Fixture saddle_fixture(const std::string& id, const Expression& P, const Expression& Q) {
  auto f = make_fixture(id, "saddle normal form, P = " + P.to_string() + ", Q = " + Q.to_string(),
                        ContinuousCombination(planar("x", "-1-y", "x", "1-y"), {P, Q}), grid1(-3, 3, 1e-2),
                        grid1(-3, 3, 1e-2));
  const auto roots = brute_roots([&](double l) { return -l + eval_lambda(Q, l); });
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, static_cast<int>(roots.size())}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = roots;
  // x' = P(lambda_i) + x: one repelling point per line
  for (double l : roots) o.equilibria.push_back({vec({-eval_lambda(P, l)}), l, EquilibriumType::Repelling, {1.0}, 1e-9});
  o.flow_sign = [P](double l, const Vec& x) { return sgn(x[0] + eval_lambda(P, l)); };
  return f;
}

Fixture saddle_node_fixture(const Expression& P, const Expression& Q) {
  auto f = make_fixture("saddle_node", "saddle-node normal form, P = " + P.to_string() + ", Q = " + Q.to_string(),
                        ContinuousCombination(planar("-x^2", "-1", "0", "1"), {P, Q}), grid1(-3, 3, 1e-2),
                        grid1(-3, 3, 1e-2));
  const auto roots = brute_roots([&](double l) { return -l + eval_lambda(Q, l); });
  auto& o = f.oracle;
  o.sliding_intervals = {{-kInf, kInf, static_cast<int>(roots.size())}};
  o.shape = ManifoldShape::Lines;
  o.line_lambdas = roots;
  for (double l : roots) {
    const double p = eval_lambda(P, l);
    if (p < 0) continue;
    const double xs = std::sqrt(2 * p / (1 + l));
    if (xs == 0.0) {
      o.equilibria.push_back({vec({0.0}), l, EquilibriumType::Degenerate, {}});
      continue;
    }
    // x' = p - (1 + l) x^2 / 2, derivative -(1 + l) x
    o.equilibria.push_back({vec({-xs}), l, EquilibriumType::Repelling, {(1 + l) * xs}});
    o.equilibria.push_back({vec({xs}), l, EquilibriumType::Attracting, {-(1 + l) * xs}});
  }
  o.flow_sign = [P](double l, const Vec& x) { return sgn(eval_lambda(P, l) - x[0] * x[0] * (1 + l) / 2); };
  return f;
}

ContinuousCombination random_combination(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coef(-4, 4);  // halves in [-2, 2]
  auto term = [&](const char* mono) {
    const int k = coef(rng);
    if (k == 0) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "+(%g)*%s", k / 2.0, mono);
    return std::string(buf);
  };
  auto quad = [&] {
    std::string s = "0";
    for (const char* m : {"1", "x", "y", "x^2", "x*y", "y^2"}) s += term(m);
    return s;
  };
  auto corr = [&](std::initializer_list<const char*> monos) {
    std::string s = "0";
    for (const char* m : monos) s += term(m);
    return "(lambda^2-1)*(" + s + ")";
  };
  PiecewiseSystem sys({"x", "y"}, parse("y"), parse_all({quad(), quad()}), parse_all({quad(), quad()}));
  return ContinuousCombination(std::move(sys), parse_all({corr({"1", "lambda", "x"}), corr({"1", "lambda", "x", "lambda^2", "lambda*x"})}));
}

// --- running -----------------------------------------------------------------

namespace {

void add(FixtureReport& r, CheckResult c) {
  r.pass = r.pass && c.pass;
  r.checks.push_back(std::move(c));
}

double boundary_distance(const Oracle& o, double x) {
  double d = kInf;
  for (double b : o.boundaries) d = std::min(d, std::abs(x - b));
  return d;
}

double grid_step(const ScanGrid& g) { return (g.hi[0] - g.lo[0]) / (g.points[0] - 1); }

void check_endpoints(const Fixture& f, FixtureReport& r) {
  const auto& c = f.combination;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double dev = 0.0;
  int used = 0;
  for (int i = 0; i < 100; ++i) {
    Vec p(c.dim());
    for (int j = 0; j < c.dim(); ++j) p[j] = u(rng);
    try {
      dev = std::max(dev, (c.eval(1.0, p) - c.base().plus(p)).lpNorm<Eigen::Infinity>());
      dev = std::max(dev, (c.eval(-1.0, p) - c.base().minus(p)).lpNorm<Eigen::Infinity>());
      ++used;
    } catch (const DomainError&) {
    }
  }
  add(r, check("endpoint identity", dev < 1e-12, dev, 1e-12, std::to_string(used) + " points"));
}

void check_scan(const Fixture& f, const FixtureAnalysis& a, FixtureReport& r) {
  const auto& o = f.oracle;
  int mismatches = 0, compared = 0, violations = 0;
  std::string first;
  for (const auto& sp : a.scan.points) {
    if (boundary_distance(o, sp.x[0]) <= 1e-3) continue;
    ++compared;
    const int expect = o.expected_count(sp.x[0]);
    const int got = sp.valid ? sp.nl.n_branches() : -1;
    if (got != expect) {
      if (mismatches++ == 0) first = "x = " + fmt(sp.x[0]) + ": " + std::to_string(got) + " vs " + std::to_string(expect);
    }
    if (!sp.valid) continue;
    if (sp.cls.kind == PointKind::Sliding && sp.nl.kind != NonlinearKind::Sliding) ++violations;
    if (sp.nl.kind == NonlinearKind::Sewing && sp.cls.kind != PointKind::Sewing && sp.cls.kind != PointKind::Singular) {
      ++violations;
    }
  }
  add(r, check("branch counts", mismatches == 0, mismatches, 0,
               std::to_string(compared) + " points" + (first.empty() ? "" : "; first mismatch " + first)));
  add(r, check("classical/nonlinear inclusions", violations == 0, violations, 0));

  if (f.sigma_grid.lo.size() != 1) return;
  const double tol = std::max(1e-3, grid_step(f.sigma_grid));
  double dev = 0.0;
  for (double b : o.boundaries) {
    double best = kInf;
    for (const auto& found : a.scan.boundaries) best = std::min(best, std::abs(found.x[0] - b));
    dev = std::max(dev, best);
  }
  int extra = 0;
  for (const auto& found : a.scan.boundaries) {
    if (boundary_distance(o, found.x[0]) > tol) ++extra;
  }
  add(r, check("boundaries", dev <= tol && extra == 0, dev, tol,
               std::to_string(a.scan.boundaries.size()) + " found, " + std::to_string(extra) + " unexpected"));
  for (const auto& [b, rtol] : o.refined) {
    double best = kInf;
    for (const auto& found : a.scan.boundaries) best = std::min(best, std::abs(found.x[0] - b));
    add(r, check("refined boundary " + fmt(b), best <= rtol, best, rtol));
  }
}

void check_shape(const Fixture& f, const FixtureAnalysis& a, FixtureReport& r) {
  const auto& o = f.oracle;
  const auto& m = a.manifold;
  switch (o.shape) {
    case ManifoldShape::Empty:
      add(r, check("slow manifold empty", m.branches.empty(), static_cast<double>(m.branches.size()), 0));
      return;
    case ManifoldShape::Lines: {
      double dev = 0.0;
      std::vector<double> seen;
      for (const auto& br : m.branches) {
        for (const auto& n : br.nodes) {
          double best = kInf;
          for (double l : o.line_lambdas) best = std::min(best, std::abs(n.lambda - l));
          dev = std::max(dev, best);
          dev = std::max(dev, std::abs(n.theta - br.nodes.front().theta));
        }
        seen.push_back(br.nodes.front().lambda);
      }
      const bool count_ok = seen.size() == o.line_lambdas.size();
      add(r, check("slow manifold: " + std::to_string(o.line_lambdas.size()) + " lines", count_ok && dev <= 1e-9, dev,
                   1e-9, std::to_string(seen.size()) + " branches"));
      return;
    }
    case ManifoldShape::GraphOverTheta: {
      bool ok = !m.branches.empty();
      for (const auto& br : m.branches) {
        for (std::size_t i = 2; i < br.nodes.size(); ++i) {
          const double d1 = br.nodes[i - 1].theta - br.nodes[i - 2].theta;
          const double d2 = br.nodes[i].theta - br.nodes[i - 1].theta;
          if (d1 * d2 < 0) ok = false;
        }
      }
      add(r, check("slow manifold: graph over theta", ok, 0, 0, std::to_string(m.branches.size()) + " branches"));
      return;
    }
    case ManifoldShape::GraphOverSigma: {
      int bad = 0;
      for (std::size_t k = 0; k < f.slow_grid.size(); ++k) {
        const Vec x = f.slow_grid.at(k);
        if (boundary_distance(o, x[0]) <= 1e-3) continue;
        std::vector<double> ls;
        for (const auto* n : m.nodes_at(static_cast<long>(k))) {
          if (std::none_of(ls.begin(), ls.end(), [&](double l) { return std::abs(l - n->lambda) < 1e-9; })) {
            ls.push_back(n->lambda);
          }
        }
        if (static_cast<int>(ls.size()) != o.expected_count(x[0])) ++bad;
      }
      add(r, check("slow manifold: graph over Sigma", bad == 0, bad, 0));
      return;
    }
    case ManifoldShape::AsymptoticPair:
      add(r, check("slow manifold: asymptotic pair", m.branches.size() == 2 && m.asymptotes.size() == 2,
                   static_cast<double>(m.asymptotes.size()), 2,
                   std::to_string(m.branches.size()) + " branches"));
      return;
  }
}

void check_nodes(const Fixture& f, const FixtureAnalysis& a, FixtureReport& r) {
  const auto& o = f.oracle;
  const auto& m = a.manifold;
  const bool planar_sigma = f.slow_grid.lo.size() == 1;
  if (planar_sigma) {
    std::vector<const SlowManifoldNode*> ends, nonhyp;
    for (const auto& br : m.branches) {
      for (const auto& n : br.nodes) {
        if (n.meets_tangency) ends.push_back(&n);
        if (!n.hyperbolic) nonhyp.push_back(&n);
      }
    }
    auto match = [](const std::vector<ExpectedNode>& want, const std::vector<const SlowManifoldNode*>& got,
                    double theta_slack) {
      double dev = 0.0;
      for (const auto& e : want) {
        double best = kInf;
        for (const auto* n : got) {
          double d = std::abs(n->x[0] - e.x);
          if (!std::isnan(e.theta)) d = std::max(d, std::max(0.0, std::abs(n->theta - e.theta) - theta_slack));
          if (!std::isnan(e.lambda)) d = std::max(d, std::abs(n->lambda - e.lambda));
          best = std::min(best, d);
        }
        dev = std::max(dev, best);
      }
      return dev;
    };
    const double slack = 1e-5;  // theta clipping at delta
    const double dev_t = match(o.tangency_ends, ends, slack);
    add(r, check("tangency ends", ends.size() == o.tangency_ends.size() && dev_t <= 1e-6, dev_t, 1e-6,
                 std::to_string(ends.size()) + " found"));
    // group non-hyperbolic nodes by location
    std::vector<const SlowManifoldNode*> groups;
    for (const auto* n : nonhyp) {
      if (std::none_of(groups.begin(), groups.end(), [&](const SlowManifoldNode* g) {
            return std::abs(g->x[0] - n->x[0]) < 1e-6 && std::abs(g->lambda - n->lambda) < 1e-4;
          })) {
        groups.push_back(n);
      }
    }
    const double dev_h = match(o.non_hyperbolic, groups, 0.0);
    add(r, check("non-hyperbolic nodes", groups.size() == o.non_hyperbolic.size() && dev_h <= 1e-6, dev_h, 1e-6,
                 std::to_string(groups.size()) + " found"));
  }

  // asymptotes
  // straight lines run parallel to Sigma, so only curved branches are checked
  if (o.shape != ManifoldShape::Lines && (!o.asymptotes.empty() || !m.asymptotes.empty())) {
    double dev = 0.0;
    for (const auto& as : m.asymptotes) {
      double best = kInf;
      for (double l : o.asymptotes) best = std::min(best, std::abs(as.lambda0 - l));
      dev = std::max(dev, best);
    }
    add(r, check("asymptotes", m.asymptotes.size() == o.asymptotes.size() && dev < 1e-8, dev, 1e-8,
                 std::to_string(m.asymptotes.size()) + " found"));
  }

  // equilibria
  {
    double dev = 0.0;
    bool types = true;
    std::string detail;
    for (const auto& e : o.equilibria) {
      const ReducedEquilibrium* best = nullptr;
      double bd = kInf;
      for (const auto& q : a.equilibria) {
        const double d = (q.x - e.x).norm();
        if (d < bd) {
          bd = d;
          best = &q;
        }
      }
      if (!best) {
        dev = kInf;
        continue;
      }
      dev = std::max(dev, bd / e.tol * 1e-6);
      if (!std::isnan(e.lambda)) dev = std::max(dev, std::abs(best->lambda - e.lambda) / e.tol * 1e-6);
      if (best->type != e.type) {
        types = false;
        detail += " type " + to_string(best->type) + " vs " + to_string(e.type) + ";";
      }
      for (std::size_t i = 0; i < e.eigenvalues.size() && i < best->eigenvalues.size(); ++i) {
        const double d = std::abs(best->eigenvalues[i].real() - e.eigenvalues[i]);
        if (d > e.eig_tol) {
          types = false;
          detail += " eigenvalue " + fmt(best->eigenvalues[i].real()) + " vs " + fmt(e.eigenvalues[i]) + ";";
        }
      }
    }
    const bool count_ok = a.equilibria.size() == o.equilibria.size();
    add(r, check("reduced equilibria", count_ok && types && dev <= 1e-6, dev, 1e-6,
                 std::to_string(a.equilibria.size()) + " found" + detail));
  }

  // reduced-flow signs
  if (o.flow_sign) {
    int bad = 0, used = 0;
    for (const auto& br : m.branches) {
      for (const auto& n : br.nodes) {
        const int want = o.flow_sign(n.lambda, n.x);
        if (want == 0) continue;
        const double v = a.slow_fast->beta(0.0, n.theta, n.x)[0];
        if (std::abs(v) < 1e-9) continue;
        ++used;
        if (sgn(v, 0.0) != want) ++bad;
      }
    }
    add(r, check("reduced-flow signs", bad == 0, bad, 0, std::to_string(used) + " nodes"));
  }
}

// Root set versus psi(theta) of grid nodes, and reduced flow versus sliding field.
void check_bridge(const Fixture& f, const FixtureAnalysis& a, FixtureReport& r) {
  const auto& sf = *a.slow_fast;
  const auto& c = f.combination;
  double dev = 0.0;
  for (std::size_t k = 0; k < f.slow_grid.size(); ++k) {
    const Vec x = f.slow_grid.at(k);
    Vec p(c.dim());
    p.head(x.size()) = x;
    p[c.dim() - 1] = 0.0;
    std::vector<double> roots;
    for (const auto& rt : interior_roots(lambda_roots(c, p))) roots.push_back(rt.lambda);
    const auto nodes = a.manifold.nodes_at(static_cast<long>(k));
    for (const auto* n : nodes) {
      const double l = sf.transition().psi(n->theta);
      double best = kInf;
      for (double rl : roots) best = std::min(best, std::abs(rl - l));
      dev = std::max(dev, best);
      if (!roots.empty()) {
        std::size_t j = 0;
        for (std::size_t i = 1; i < roots.size(); ++i)
          if (std::abs(roots[i] - l) < std::abs(roots[j] - l)) j = i;
        const Vec slide = c.eval(roots[j], p).head(x.size());
        dev = std::max(dev, (sf.beta(0.0, n->theta, x) - slide).lpNorm<Eigen::Infinity>());
      }
    }
    for (double rl : roots) {
      double best = kInf;
      for (const auto* n : nodes) best = std::min(best, std::abs(sf.transition().psi(n->theta) - rl));
      dev = std::max(dev, best);
    }
  }
  add(r, check("slow manifold matches sliding branches", dev <= 1e-9, dev, 1e-9));
}

void check_run(const Fixture& f, FixtureReport& r) {
  const auto& run = *f.oracle.run;
  const Trajectory tr = integrate_filippov(f.combination, run.p0, run.T, run.policy);
  if (run.final_state) {
    const double dev = (tr.final_state() - *run.final_state).norm();
    add(r, check("hybrid end state", dev <= run.final_tol, dev, run.final_tol));
  }
  const auto conv = convergence_check(f.combination, TransitionFunction::tanh(), run.p0, run.T, run.eps, run.policy);
  bool ok = true;
  int exceptions = 0;
  std::string detail;
  for (std::size_t i = 0; i < conv.rows.size(); ++i) {
    const auto& row = conv.rows[i];
    detail += (i ? ", " : "") + fmt(row.eps) + ":" + (row.failed ? "failed" : fmt(row.error));
    if (row.failed) ok = false;
    if (i == 0 || row.failed || conv.rows[i - 1].failed) continue;
    const double prev = conv.rows[i - 1].error;
    if (run.strictly_decreasing ? !(row.error < prev) : row.error > prev) {
      if (run.strictly_decreasing || row.error >= 1e-7 || ++exceptions > 1) ok = false;
    }
  }
  add(r, check("regularized trajectories converge", ok, conv.slope, 0, detail + "; slope " + fmt(conv.slope)));
}

}  // namespace

FixtureReport run_fixture(const Fixture& f) {
  const auto start = std::chrono::steady_clock::now();
  FixtureReport r{f.id, f.title, true, 0.0, {}};
  auto guarded = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      add(r, check(name, false, kInf, 0, e.category() + ": " + e.what()));
    }
  };
  FixtureAnalysis a;
  guarded("endpoint identity", [&] { check_endpoints(f, r); });
  guarded("region scan", [&] {
    a.scan = region_scan(f.combination, f.sigma_grid);
    check_scan(f, a, r);
  });
  guarded("slow manifold", [&] {
    a.slow_fast = build_slow_fast(f.combination, TransitionFunction::tanh());
    a.manifold = trace_slow_manifold(*a.slow_fast, f.slow_grid);
    for (const auto& br : a.manifold.branches) {
      for (auto& e : reduced_equilibria(*a.slow_fast, br)) {
        const bool dup = std::any_of(a.equilibria.begin(), a.equilibria.end(), [&](const ReducedEquilibrium& q) {
          return (q.x - e.x).norm() < 1e-7 && std::abs(q.lambda - e.lambda) < 1e-7;
        });
        if (!dup) a.equilibria.push_back(std::move(e));
      }
    }
    check_shape(f, a, r);
    check_nodes(f, a, r);
    check_bridge(f, a, r);
  });
  for (const auto& [name, fn] : f.oracle.extra) {
    guarded(name, [&, &fn = fn] {
      if (!a.slow_fast) throw Error("catalog", "slow-fast system unavailable");
      add(r, fn(f, a));
    });
  }
  if (f.oracle.run) guarded("regularized trajectories converge", [&] { check_run(f, r); });
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

FixtureReport run_fixture(const std::string& id) { return run_fixture(fixture(id)); }

std::string report_text(const FixtureReport& r) {
  std::ostringstream os;
  os << "fixture " << r.id << ": " << r.title << "\n";
  for (const auto& c : r.checks) {
    os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << "  deviation " << fmt(c.deviation)
       << "  tolerance " << fmt(c.tolerance);
    if (!c.detail.empty()) os << "  (" << c.detail << ")";
    os << "\n";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r.seconds);
  os << "result: " << (r.pass ? "PASS" : "FAIL") << " (" << buf << " s)\n";
  return os.str();
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json to_json(const FixtureReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"deviation", number_or_null(c.deviation)},
                      {"tolerance", number_or_null(c.tolerance)},
                      {"detail", c.detail}});
  }
  return {{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"seconds", r.seconds}, {"checks", checks}};
}

}  // namespace

std::string report_json(const FixtureReport& r, int indent) { return to_json(r).dump(indent); }

std::string reports_json(const std::vector<FixtureReport>& rs, int indent) {
  nlohmann::json arr = nlohmann::json::array();
  bool pass = true;
  for (const auto& r : rs) {
    arr.push_back(to_json(r));
    pass = pass && r.pass;
  }
  return nlohmann::json{{"pass", pass}, {"fixtures", arr}}.dump(indent);
}

std::vector<PerturbedEquilibrium> perturbed_equilibria(const Fixture& f, double eps, const TransitionFunction& phi) {
  if (f.combination.dim() != 2) throw ModelError("perturbed equilibria need a planar fixture");
  const auto sf = build_slow_fast(f.combination, phi);
  const auto sm = trace_slow_manifold(sf, f.slow_grid);
  const SmoothField field = nonlinear_regularization(f.combination, phi, eps);
  std::vector<PerturbedEquilibrium> out;
  for (const auto& br : sm.branches) {
    for (const auto& e : reduced_equilibria(sf, br)) {
      if (e.type == EquilibriumType::Degenerate || !is_hyperbolic(sf, e.theta, e.x)) continue;
      PerturbedEquilibrium pe;
      pe.reduced = e;
      // blow-down: y = r cos(theta), eps = r sin(theta)
      pe.seed = vec({e.x[0], eps / std::tan(e.theta)});
      Vec p = pe.seed;
      for (int it = 0; it < 100; ++it) {
        const Vec F = field.value(p);
        if (F.norm() < 1e-12) {
          pe.converged = true;
          break;
        }
        const Vec step = field.jacobian(p).colPivHouseholderQr().solve(F);
        p -= step;
        if (!p.allFinite()) break;
        if (step.norm() < 1e-15 * std::max(1.0, p.norm())) {
          pe.converged = field.value(p).norm() < 1e-9;
          break;
        }
      }
      pe.point = p;
      if (pe.converged) {
        Eigen::EigenSolver<Mat> es(field.jacobian(p));
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) pe.eigenvalues.push_back(es.eigenvalues()[i]);
        std::sort(pe.eigenvalues.begin(), pe.eigenvalues.end(),
                  [](const auto& a, const auto& b) { return a.real() < b.real(); });
        const double lo = pe.eigenvalues.front().real(), hi = pe.eigenvalues.back().real();
        pe.saddle_or_repelling = hi > 0 && lo != 0;
      }
      out.push_back(std::move(pe));
    }
  }
  return out;
}

}  // namespace nlslide
