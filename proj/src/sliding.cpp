#include "nlslide/sliding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "nlslide/errors.hpp"
#include "nlslide/parallel.hpp"

namespace nlslide {

namespace {

using Fn = std::function<double(double)>;

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

// Bisection on a sign-change bracket, then a guarded Newton polish.
double bisect(const Fn& f, double a, double b, double fa, double tol, const Fn* df) {
  while (b - a > tol) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double fm = f(m);
    if (fm == 0.0) return m;
    if (sign_of(fm) == sign_of(fa)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  double x = 0.5 * (a + b);
  if (df != nullptr) {
    double fx = f(x);
    for (int it = 0; it < 3 && fx != 0.0; ++it) {
      const double d = (*df)(x);
      if (d == 0.0) break;
      const double xn = x - fx / d;
      if (!(xn >= a && xn <= b)) break;
      const double fn = f(xn);
      if (std::abs(fn) >= std::abs(fx)) break;
      x = xn;
      fx = fn;
    }
  }
  return x;
}

// Minimizer of |f| on [a, b]: a stationary point of f if df brackets one,
// otherwise golden-section search.
double minimize_abs(const Fn& f, const Fn& df, double a, double b, double tol) {
  const double da = df(a);
  const double db = df(b);
  if (sign_of(da) * sign_of(db) < 0) return bisect(df, a, b, da, tol, nullptr);
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = std::abs(f(c));
  double fd = std::abs(f(d));
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = std::abs(f(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = std::abs(f(d));
    }
  }
  return 0.5 * (a + b);
}

std::vector<LambdaRoot> find_roots(const Fn& f, const Fn& df, const RootOptions& opt, bool include_endpoints) {
  const int n = std::max(opt.samples, 3);
  std::vector<double> lam(static_cast<std::size_t>(n)), val(static_cast<std::size_t>(n));
  double scale = 1.0;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    lam[i] = k == n - 1 ? 1.0 : -1.0 + 2.0 * k / (n - 1);
    val[i] = f(lam[i]);
    scale = std::max(scale, std::abs(val[i]));
  }

  std::vector<double> found;
  std::vector<bool> degenerate;
  auto add = [&](double x, bool deg) {
    found.push_back(x);
    degenerate.push_back(deg);
  };

  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (val[i] == 0.0) add(lam[i], false);
    if (k + 1 < n && sign_of(val[i]) * sign_of(val[i + 1]) < 0) {
      add(bisect(f, lam[i], lam[i + 1], val[i], opt.bisect_tol, &df), false);
    }
  }
  // even-multiplicity candidates: local minima of |g| with no sign change
  for (int k = 1; k + 1 < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const int s = sign_of(val[i]);
    if (s == 0 || sign_of(val[i - 1]) != s || sign_of(val[i + 1]) != s) continue;
    if (std::abs(val[i]) > std::abs(val[i - 1]) || std::abs(val[i]) > std::abs(val[i + 1])) continue;
    if (std::abs(val[i]) == std::abs(val[i - 1]) && std::abs(val[i]) == std::abs(val[i + 1])) continue;  // plateau
    const double a = lam[i - 1];
    const double b = lam[i + 1];
    const double m = minimize_abs(f, df, a, b, opt.bisect_tol);
    const double fm = f(m);
    if (sign_of(fm) == -s) {
      add(bisect(f, a, m, val[i - 1], opt.bisect_tol, &df), false);
      add(bisect(f, m, b, fm, opt.bisect_tol, &df), false);
    } else if (std::abs(fm) < opt.degenerate_tol) {
      add(m, true);
    }
  }
  if (include_endpoints) {
    for (std::size_t i : {std::size_t{0}, static_cast<std::size_t>(n - 1)}) {
      if (val[i] != 0.0 && std::abs(val[i]) < opt.degenerate_tol) add(lam[i], true);
    }
  }

  std::vector<LambdaRoot> roots;
  for (std::size_t j = 0; j < found.size(); ++j) {
    double x = found[j];
    const bool at_end = std::abs(std::abs(x) - 1.0) < 1e-12;
    if (at_end) x = x > 0 ? 1.0 : -1.0;
    if (at_end && !include_endpoints) continue;
    LambdaRoot r;
    r.lambda = x;
    r.endpoint = at_end;
    r.residual = f(x);
    r.slope = df(x);
    r.transversal = !degenerate[j] && std::abs(r.slope) > opt.transversal_tol * scale;
    roots.push_back(r);
  }
  std::sort(roots.begin(), roots.end(), [](const LambdaRoot& a, const LambdaRoot& b) { return a.lambda < b.lambda; });
  std::vector<LambdaRoot> unique;
  for (const auto& r : roots) {
    if (!unique.empty() && r.lambda - unique.back().lambda <= opt.dedup_tol) {
      auto& u = unique.back();
      // keep the endpoint flag and the better residual; a merged pair is degenerate
      const bool endpoint = u.endpoint || r.endpoint;
      if (std::abs(r.residual) < std::abs(u.residual) || r.endpoint) u = r;
      u.endpoint = endpoint;
      if (endpoint) u.lambda = u.lambda > 0 ? 1.0 : -1.0;
      continue;
    }
    unique.push_back(r);
  }
  return unique;
}

void require_on_manifold(const PiecewiseSystem& sys, const Vec& p, double tol) {
  if (p.size() != sys.dim()) throw ModelError("point has dimension " + std::to_string(p.size()));
  const double h = sys.h_value(p);
  if (!(std::abs(h) < tol)) {
    throw NotOnManifold("point is not on the switching manifold (h = " + std::to_string(h) + ")");
  }
}

}  // namespace

std::string PointClass::label() const {
  switch (kind) {
    case PointKind::Sewing: return "sewing";
    case PointKind::Sliding: return "sliding";
    case PointKind::Singular: break;
  }
  if (plus_tangent && minus_tangent) return "singular+-";
  return plus_tangent ? "singular+" : "singular-";
}

PointClass classify(const PiecewiseSystem& sys, const Vec& p, const ClassifyOptions& opt) {
  require_on_manifold(sys, p, opt.manifold_tol);
  PointClass c;
  c.plus_lie = sys.plus_lie(p);
  c.minus_lie = sys.minus_lie(p);
  c.plus_tangent = std::abs(c.plus_lie) < opt.singular_tol;
  c.minus_tangent = std::abs(c.minus_lie) < opt.singular_tol;
  if (c.plus_tangent || c.minus_tangent) {
    c.kind = PointKind::Singular;
  } else {
    c.kind = c.plus_lie * c.minus_lie > 0.0 ? PointKind::Sewing : PointKind::Sliding;
  }
  return c;
}

std::vector<LambdaRoot> unit_interval_roots(const std::function<double(double)>& f,
                                            const std::function<double(double)>& df, const RootOptions& opt,
                                            bool include_endpoints) {
  return find_roots(f, df, opt, include_endpoints);
}

std::vector<LambdaRoot> lambda_roots(const ContinuousCombination& c, const Vec& p, const RootOptions& opt) {
  require_on_manifold(c.base(), p, opt.manifold_tol);
  const Fn f = [&](double l) { return c.g(l, p); };
  const Fn df = [&](double l) { return c.dg_dlambda(l, p); };
  return find_roots(f, df, opt, true);
}

std::vector<double> lambda_critical_points(const ContinuousCombination& c, const Vec& p, const RootOptions& opt) {
  const Fn f = [&](double l) { return c.dg_dlambda(l, p); };
  const Fn df = [&](double l) { return c.d2g_dlambda2(l, p); };
  std::vector<double> out;
  for (const auto& r : find_roots(f, df, opt, false)) out.push_back(r.lambda);
  return out;
}

std::vector<LambdaRoot> interior_roots(const std::vector<LambdaRoot>& roots) {
  std::vector<LambdaRoot> out;
  std::copy_if(roots.begin(), roots.end(), std::back_inserter(out), [](const LambdaRoot& r) { return !r.endpoint; });
  return out;
}

NonlinearPointClass nonlinear_classify(const ContinuousCombination& c, const Vec& p, const RootOptions& opt) {
  NonlinearPointClass out;
  out.roots = lambda_roots(c, p, opt);
  out.kind = out.roots.empty() ? NonlinearKind::Sewing : NonlinearKind::Sliding;
  return out;
}

Vec sliding_field(const ContinuousCombination& c, const Vec& p, int branch, const RootOptions& opt) {
  const auto roots = interior_roots(lambda_roots(c, p, opt));
  if (branch < 0 || branch >= static_cast<int>(roots.size())) {
    throw Error("branch", "no sliding branch " + std::to_string(branch) + " at this point (" +
                              std::to_string(roots.size()) + " available)");
  }
  return c.eval(roots[static_cast<std::size_t>(branch)].lambda, p);
}

double filippov_lambda(const PiecewiseSystem& sys, const Vec& p) {
  const double a = sys.plus_lie(p);
  const double b = sys.minus_lie(p);
  if (a * b >= 0.0) throw ModelError("not a classical sliding point");
  return (a + b) / (b - a);
}

std::optional<Vec> lift_to_manifold(const PiecewiseSystem& sys, const Vec& x, double y0) {
  const int n = sys.dim();
  Vec p(n);
  p.head(n - 1) = x;
  p[n - 1] = y0;
  try {
    for (int it = 0; it < 60; ++it) {
      const double h = sys.h_value(p);
      if (std::abs(h) < 1e-14 * std::max(1.0, p.norm())) return p;
      const double dh = sys.grad_h(p)[n - 1];
      if (std::abs(dh) < 1e-14) return std::nullopt;
      p[n - 1] -= h / dh;
    }
    if (std::abs(sys.h_value(p)) < 1e-12) return p;
  } catch (const DomainError&) {
  }
  return std::nullopt;
}

// --- grid ------------------------------------------------------------------

ScanGrid ScanGrid::with_step(const Vec& lo, const Vec& hi, double step) {
  if (lo.size() != hi.size() || lo.size() == 0) throw ModelError("scan box dimensions disagree");
  if (!(step > 0.0)) throw ModelError("scan step must be positive");
  ScanGrid g{lo, hi, {}};
  for (int i = 0; i < lo.size(); ++i) {
    if (!(hi[i] > lo[i])) throw ModelError("scan box is empty along axis " + std::to_string(i));
    g.points.push_back(static_cast<int>(std::llround((hi[i] - lo[i]) / step)) + 1);
    g.points.back() = std::max(g.points.back(), 2);
  }
  return g;
}

std::size_t ScanGrid::size() const {
  std::size_t n = 1;
  for (int k : points) n *= static_cast<std::size_t>(k);
  return n;
}

std::vector<int> ScanGrid::unravel(std::size_t index) const {
  std::vector<int> idx(points.size());
  for (std::size_t a = points.size(); a-- > 0;) {
    idx[a] = static_cast<int>(index % static_cast<std::size_t>(points[a]));
    index /= static_cast<std::size_t>(points[a]);
  }
  return idx;
}

Vec ScanGrid::at(std::size_t index) const {
  const auto idx = unravel(index);
  Vec x(lo.size());
  for (int a = 0; a < lo.size(); ++a) {
    const int k = idx[static_cast<std::size_t>(a)];
    const int m = points[static_cast<std::size_t>(a)] - 1;
    x[a] = k == m ? hi[a] : lo[a] + (hi[a] - lo[a]) * k / m;
  }
  return x;
}

std::string to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::TangencyPlus: return "tangency+";
    case BoundaryKind::TangencyMinus: return "tangency-";
    case BoundaryKind::Fold: return "fold";
    case BoundaryKind::Unresolved: return "count";
  }
  return {};
}

namespace {

struct Segment {
  const ContinuousCombination& c;
  Vec a, b;
  double y_hint;

  Vec point(double t) const {
    const Vec x = a + t * (b - a);
    auto p = lift_to_manifold(c.base(), x, y_hint);
    if (!p) throw DomainError("cannot lift boundary point onto the switching manifold");
    return *p;
  }
};

double bisect_t(const Fn& F, double tol) {
  double fa = F(0.0);
  const double fb = F(1.0);
  if (fa == 0.0) return 0.0;
  if (fb == 0.0) return 1.0;
  return bisect(F, 0.0, 1.0, fa, tol, nullptr);
}

// Critical value of g next to lambda_hint (the merging pair's extremum).
double critical_value(const ContinuousCombination& c, const Vec& p, double lambda_hint, const RootOptions& opt,
                      double* lambda_out) {
  const auto crit = lambda_critical_points(c, p, opt);
  if (crit.empty()) throw DomainError("critical point lost");
  const double best = *std::min_element(crit.begin(), crit.end(), [&](double u, double v) {
    return std::abs(u - lambda_hint) < std::abs(v - lambda_hint);
  });
  if (lambda_out) *lambda_out = best;
  return c.g(best, p);
}

Boundary refine(const ContinuousCombination& c, const ScanPoint& A, const ScanPoint& B, int axis,
                const ScanOptions& opt) {
  const Segment seg{c, A.x, B.x, A.p[A.p.size() - 1]};
  const double len = std::abs(B.x[axis] - A.x[axis]);
  const double tol = std::max(opt.refine_tol / std::max(len, 1e-300), 1e-15);
  Boundary bd;
  bd.axis = axis;
  bd.n_before = A.nl.n_branches();
  bd.n_after = B.nl.n_branches();

  auto finish = [&](double t, BoundaryKind kind) {
    bd.kind = kind;
    bd.x = A.x + t * (B.x - A.x);
    bd.width = tol * len;
    return bd;
  };

  for (double end : {1.0, -1.0}) {
    const double ga = c.g(end, A.p);
    const double gb = c.g(end, B.p);
    if (sign_of(ga) * sign_of(gb) <= 0 && !(ga == 0.0 && gb == 0.0)) {
      const Fn F = [&](double t) { return c.g(end, seg.point(t)); };
      return finish(bisect_t(F, tol), end > 0 ? BoundaryKind::TangencyPlus : BoundaryKind::TangencyMinus);
    }
  }

  const auto crit_a = lambda_critical_points(c, A.p, opt.roots);
  for (double la : crit_a) {
    const double va = c.g(la, A.p);
    double lb = la;
    const double vb = critical_value(c, B.p, la, opt.roots, &lb);
    if (std::abs(lb - la) > 0.25 || sign_of(va) * sign_of(vb) > 0) continue;
    double hint = la;
    const Fn F = [&](double t) {
      double l = hint;
      const double v = critical_value(c, seg.point(t), hint, opt.roots, &l);
      hint = l;
      return v;
    };
    return finish(bisect_t(F, tol), BoundaryKind::Fold);
  }

  // fallback: bisection on the branch count itself
  const int na = bd.n_before;
  double lo = 0.0;
  double hi = 1.0;
  while ((hi - lo) * len > 1e-10) {
    const double m = 0.5 * (lo + hi);
    const int nm = nonlinear_classify(c, seg.point(m), opt.roots).n_branches();
    (nm == na ? lo : hi) = m;
  }
  bd.kind = BoundaryKind::Unresolved;
  bd.x = A.x + 0.5 * (lo + hi) * (B.x - A.x);
  bd.width = (hi - lo) * len;
  return bd;
}

}  // namespace

ScanResult region_scan(const ContinuousCombination& c, const ScanGrid& grid, const ScanOptions& opt) {
  const auto& sys = c.base();
  if (grid.lo.size() != sys.dim() - 1) throw ModelError("scan grid must cover the first n-1 coordinates");
  ScanResult out;
  out.grid = grid;
  out.points.resize(grid.size());

  parallel_for(grid.size(), opt.threads, [&](std::size_t i) {
    ScanPoint& sp = out.points[i];
    sp.x = grid.at(i);
    const auto p = lift_to_manifold(sys, sp.x);
    if (!p) {
      sp.error = "not liftable onto h = 0";
      return;
    }
    sp.p = *p;
    try {
      if (sys.grad_h(sp.p).norm() < 1e-12) {
        sp.error = "0 is not a regular value of h here";
        return;
      }
      sp.cls = classify(sys, sp.p, opt.classify);
      sp.nl = nonlinear_classify(c, sp.p, opt.roots);
      sp.valid = true;
    } catch (const DomainError& e) {
      sp.error = e.what();
    }
  });

  for (const auto& sp : out.points) {
    if (sp.valid) out.max_branches = std::max(out.max_branches, sp.nl.n_branches());
  }

  // boundaries between grid neighbours along each axis
  const int axes = static_cast<int>(grid.points.size());
  std::vector<std::size_t> stride(static_cast<std::size_t>(axes), 1);
  for (int a = axes - 2; a >= 0; --a) {
    stride[static_cast<std::size_t>(a)] =
        stride[static_cast<std::size_t>(a) + 1] * static_cast<std::size_t>(grid.points[static_cast<std::size_t>(a) + 1]);
  }
  for (int a = 0; a < axes; ++a) {
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      const auto idx = grid.unravel(i);
      if (idx[static_cast<std::size_t>(a)] + 1 >= grid.points[static_cast<std::size_t>(a)]) continue;
      const auto& A = out.points[i];
      const auto& B = out.points[i + stride[static_cast<std::size_t>(a)]];
      if (!A.valid || !B.valid || A.nl.n_branches() == B.nl.n_branches()) continue;
      Boundary bd;
      try {
        bd = refine(c, A, B, a, opt);
      } catch (const DomainError&) {
        bd.axis = a;
        bd.kind = BoundaryKind::Unresolved;
        bd.x = 0.5 * (A.x + B.x);
        bd.n_before = A.nl.n_branches();
        bd.n_after = B.nl.n_branches();
        bd.width = std::abs(B.x[a] - A.x[a]);
      }
      // a grid point sitting exactly on a boundary yields two brackets that refine to one place
      if (!out.boundaries.empty()) {
        auto& last = out.boundaries.back();
        if (last.axis == a && (last.x - bd.x).norm() < 1e-9 && last.n_after == bd.n_before) {
          last.n_after = bd.n_after;
          continue;
        }
      }
      out.boundaries.push_back(bd);
    }
  }
  return out;
}

}  // namespace nlslide
