#include "nlslide/slowfast.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>

#include "nlslide/errors.hpp"
#include "nlslide/parallel.hpp"

namespace nlslide {

namespace {

constexpr double kPi = std::numbers::pi;

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

Vec on_sigma(const Vec& x) {
  Vec p(x.size() + 1);
  p.head(x.size()) = x;
  p[x.size()] = 0.0;
  return p;
}

double bisect_unit(const std::function<double(double)>& F, double tol) {
  double a = 0.0;
  double b = 1.0;
  double fa = F(a);
  const double fb = F(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  while (b - a > tol) {
    const double m = 0.5 * (a + b);
    const double fm = F(m);
    if (fm == 0.0) return m;
    if (sign_of(fm) == sign_of(fa)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

// --- system ----------------------------------------------------------------

SlowFastSystem build_slow_fast(const ContinuousCombination& c, const TransitionFunction& phi) {
  const auto& sys = c.base();
  if (!sys.h_is_last_coordinate()) {
    throw CoordinateFormError("the blow-up needs h equal to the last coordinate ('" + sys.variables().back() +
                              "'); h = " + sys.h().to_string() +
                              "; rewrite the system in coordinates where the switching function is y");
  }
  SlowFastSystem sf(c, phi);
  if (phi.kind() == TransitionFunction::Kind::Tanh || (phi.kind() == TransitionFunction::Kind::Custom && !phi.is_sharp())) {
    const Expression theta = Expression::variable("theta");
    const Expression lam = phi.symbolic(Expression::call(Func::Cot, theta));
    const Expression y = Expression::variable("r") * Expression::call(Func::Cos, theta);
    const std::string& yname = sys.variables().back();
    auto blow = [&](const Expression& s) { return substitute(substitute(s, "lambda", lam), yname, y); };
    sf.alpha0_expr_ = blow(c.components().back());
    for (int i = 0; i + 1 < c.dim(); ++i) sf.beta_expr_.push_back(blow(c.components()[static_cast<std::size_t>(i)]));
  }
  return sf;
}

const Expression& SlowFastSystem::alpha0_expression() const {
  if (!alpha0_expr_) throw ModelError("no closed form for a sharp transition profile; use the lambda form");
  return *alpha0_expr_;
}

const std::vector<Expression>& SlowFastSystem::beta_expressions() const {
  if (!alpha0_expr_) throw ModelError("no closed form for a sharp transition profile; use the lambda form");
  return beta_expr_;
}

Vec SlowFastSystem::ambient(double r, double theta, const Vec& x) const {
  Vec p(x.size() + 1);
  p.head(x.size()) = x;
  p[x.size()] = r * std::cos(theta);
  return p;
}

double SlowFastSystem::alpha0(double r, double theta, const Vec& x) const {
  return c_.eval(phi_.psi(theta), ambient(r, theta, x))[slow_dim()];
}

Vec SlowFastSystem::beta(double r, double theta, const Vec& x) const {
  return c_.eval(phi_.psi(theta), ambient(r, theta, x)).head(slow_dim());
}

double SlowFastSystem::dalpha0_dtheta(double r, double theta, const Vec& x) const {
  const double lam = phi_.psi(theta);
  const Vec p = ambient(r, theta, x);
  const int n = c_.dim();
  double d = phi_.dpsi(theta) * c_.d_lambda(lam, p)[n - 1];
  if (r != 0.0) d -= r * std::sin(theta) * c_.jacobian_x(lam, p)(n - 1, n - 1);
  return d;
}

Vec SlowFastSystem::slow_field(double r, double theta, const Vec& x) const {
  if (!(r > 0.0)) throw DomainError("slow time needs r > 0");
  const Vec s = c_.eval(phi_.psi(theta), ambient(r, theta, x));
  Vec out(c_.dim());
  out[0] = -std::sin(theta) * s[slow_dim()] / r;
  out.tail(slow_dim()) = s.head(slow_dim());
  return out;
}

Vec SlowFastSystem::fast_field(double r, double theta, const Vec& x) const {
  const Vec s = c_.eval(phi_.psi(theta), ambient(r, theta, x));
  Vec out(c_.dim());
  out[0] = -std::sin(theta) * s[slow_dim()];
  out.tail(slow_dim()) = r * s.head(slow_dim());
  return out;
}

// --- blow-up maps ----------------------------------------------------------

BlowupImages blowup_maps(double r, double theta, const Vec& x) {
  if (!(theta > 0.0 && theta < kPi)) throw DomainError("blow-up maps need theta in (0, pi)");
  if (!(r >= 0.0)) throw DomainError("blow-up maps need r >= 0");
  const int m = static_cast<int>(x.size());
  BlowupImages out;
  out.polar.resize(m + 2);
  out.polar.head(m) = x;
  out.polar[m] = r * std::cos(theta);
  out.polar[m + 1] = r * std::sin(theta);

  // G(r, theta, x) = (x, cot theta, r sin theta)
  const double yb = std::cos(theta) / std::sin(theta);
  const double eb = r * std::sin(theta);
  out.directional.resize(m + 2);
  out.directional.head(m) = x;
  out.directional[m] = eb * yb;
  out.directional[m + 1] = eb;
  return out;
}

// --- hyperbolicity and reduced flow -------------------------------------------

bool is_hyperbolic(const SlowFastSystem& sf, double theta, const Vec& x, double tol) {
  const auto& c = sf.combination();
  const Vec p = on_sigma(x);
  double scale = 1.0;
  for (double l : {-1.0, -0.5, 0.0, 0.5, 1.0}) scale = std::max(scale, std::abs(c.dg_dlambda(l, p)));
  return std::abs(c.dg_dlambda(sf.transition().psi(theta), p)) > tol * scale;
}

Vec reduced_flow(const SlowFastSystem& sf, double theta, const Vec& x, double tol) {
  const double a = sf.alpha0(0.0, theta, x);
  if (!(std::abs(a) <= tol)) {
    throw NotOnManifold("(theta, x) is not on the slow manifold (alpha0 = " + std::to_string(a) + ")");
  }
  return sf.beta(0.0, theta, x);
}

Mat reduced_jacobian(const SlowFastSystem& sf, double lambda, const Vec& x, bool* on_fold) {
  const auto& c = sf.combination();
  const int m = sf.slow_dim();
  const Vec p = on_sigma(x);
  const Mat J = c.jacobian_x(lambda, p);
  const Vec dl = c.d_lambda(lambda, p);
  const double gl = c.dg_dlambda(lambda, p);
  const Vec gx = c.dg_dx(lambda, p).head(m);
  double scale = 1.0;
  for (double l : {-1.0, 0.0, 1.0}) scale = std::max(scale, std::abs(c.dg_dlambda(l, p)));
  bool fold = false;
  Vec dlam_dx = Vec::Zero(m);
  if (std::abs(gl) > 1e-10 * scale) {
    dlam_dx = -gx / gl;
  } else if (gx.norm() > 1e-12) {
    fold = true;  // lambda(x) is not a graph here
  }
  if (on_fold) *on_fold = fold;
  return J.topLeftCorner(m, m) + dl.head(m) * dlam_dx.transpose();
}

std::string to_string(EquilibriumType t) {
  switch (t) {
    case EquilibriumType::Attracting: return "attracting";
    case EquilibriumType::Repelling: return "repelling";
    case EquilibriumType::Saddle: return "saddle";
    case EquilibriumType::Degenerate: return "degenerate";
  }
  return {};
}

bool SlowManifoldBranch::all_hyperbolic() const {
  return std::all_of(nodes.begin(), nodes.end(), [](const SlowManifoldNode& n) { return n.hyperbolic; });
}

std::vector<const SlowManifoldNode*> SlowManifold::nodes_at(long grid_index) const {
  std::vector<const SlowManifoldNode*> out;
  for (const auto& b : branches) {
    for (const auto& n : b.nodes) {
      if (n.grid_index == grid_index) out.push_back(&n);
    }
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->lambda < b->lambda; });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// --- tracing -----------------------------------------------------------------

namespace {

struct Column {
  bool valid = false;
  Vec x, p;
  std::vector<double> lambdas;
  std::vector<bool> touch;  // even-multiplicity root: counts as two merging slots
};

class Tracer {
 public:
  Tracer(const SlowFastSystem& sf, const ScanGrid& grid, const TraceOptions& opt)
      : sf_(sf), c_(sf.combination()), grid_(grid), opt_(opt) {}

  SlowManifold run();

 private:
  int add_node(double lambda, const Vec& x, long grid_index) {
    SlowManifoldNode n;
    n.theta = sf_.transition().psi_inverse(lambda);
    n.lambda = sf_.transition().psi(n.theta);
    n.x = x;
    n.grid_index = grid_index;
    fill_flags(n);
    nodes_.push_back(n);
    adj_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_tangency_node(double end, const Vec& x) {
    SlowManifoldNode n;
    n.theta = end > 0 ? opt_.delta : kPi - opt_.delta;
    n.lambda = sf_.transition().psi(n.theta);
    n.x = x;
    n.meets_tangency = true;
    fill_flags(n);
    nodes_.push_back(n);
    adj_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  void fill_flags(SlowManifoldNode& n) const {
    n.dalpha_dtheta = sf_.dalpha0_dtheta(0.0, n.theta, n.x);
    n.hyperbolic = is_hyperbolic(sf_, n.theta, n.x, opt_.hyperbolic_tol);
  }

  void add_edge(int a, int b) {
    if (a == b) return;
    auto& la = adj_[static_cast<std::size_t>(a)];
    if (std::find(la.begin(), la.end(), b) != la.end()) return;
    la.push_back(b);
    adj_[static_cast<std::size_t>(b)].push_back(a);
  }

  void match_columns(std::size_t ia, std::size_t ib, bool refine_ends);
  void close_run(std::size_t ia, std::size_t ib, const std::vector<int>& run_slots, bool on_a);
  bool insert_fold(std::size_t ia, std::size_t ib, double la, double lb, int na, int nb);
  bool insert_tangency(std::size_t ia, std::size_t ib, double lambda, int node);
  Vec lerp_x(std::size_t ia, std::size_t ib, double t) const {
    return cols_[ia].x + t * (cols_[ib].x - cols_[ia].x);
  }
  void find_asymptotes(SlowManifold& out) const;
  std::vector<SlowManifoldBranch> polylines() const;
  std::vector<SlowManifoldBranch> components() const;

  const SlowFastSystem& sf_;
  const ContinuousCombination& c_;
  const ScanGrid& grid_;
  const TraceOptions& opt_;
  std::vector<Column> cols_;
  std::vector<std::vector<int>> slots_;  // node ids per column, increasing lambda
  std::vector<SlowManifoldNode> nodes_;
  std::vector<std::vector<int>> adj_;
};

SlowManifold Tracer::run() {
  const std::size_t n = grid_.size();
  cols_.resize(n);
  parallel_for(n, opt_.threads, [&](std::size_t i) {
    Column& col = cols_[i];
    col.x = grid_.at(i);
    col.p = on_sigma(col.x);
    try {
      for (const auto& r : interior_roots(lambda_roots(c_, col.p, opt_.roots))) {
        bool touch = false;
        if (!r.transversal) {
          const double eta = 1e-5;
          const double lo = std::max(r.lambda - eta, -1.0);
          const double hi = std::min(r.lambda + eta, 1.0);
          touch = sign_of(c_.g(lo, col.p)) * sign_of(c_.g(hi, col.p)) > 0;
        }
        col.lambdas.push_back(r.lambda);
        col.touch.push_back(touch);
      }
      col.valid = true;
    } catch (const DomainError&) {
      col.valid = false;
    }
  });

  slots_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& col = cols_[i];
    for (std::size_t k = 0; k < col.lambdas.size(); ++k) {
      const int id = add_node(col.lambdas[k], col.x, static_cast<long>(i));
      slots_[i].push_back(id);
      if (col.touch[k]) slots_[i].push_back(id);
    }
  }

  const int axes = static_cast<int>(grid_.points.size());
  std::size_t stride = 1;
  std::vector<std::size_t> strides(static_cast<std::size_t>(axes));
  for (int a = axes - 1; a >= 0; --a) {
    strides[static_cast<std::size_t>(a)] = stride;
    stride *= static_cast<std::size_t>(grid_.points[static_cast<std::size_t>(a)]);
  }
  for (int a = 0; a < axes; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = grid_.unravel(i);
      if (idx[static_cast<std::size_t>(a)] + 1 >= grid_.points[static_cast<std::size_t>(a)]) continue;
      const std::size_t j = i + strides[static_cast<std::size_t>(a)];
      if (cols_[i].valid && cols_[j].valid) match_columns(i, j, axes == 1);
    }
  }

  SlowManifold out;
  out.branches = axes == 1 ? polylines() : components();
  if (axes == 1) find_asymptotes(out);
  return out;
}

// Order-preserving alignment of the slots of two neighbouring columns.
void Tracer::match_columns(std::size_t ia, std::size_t ib, bool refine_ends) {
  const auto& A = slots_[ia];
  const auto& B = slots_[ib];
  const std::size_t na = A.size();
  const std::size_t nb = B.size();
  auto lam = [&](int id) { return nodes_[static_cast<std::size_t>(id)].lambda; };
  std::vector<std::vector<double>> cost(na + 1, std::vector<double>(nb + 1, 0.0));
  for (std::size_t i = 0; i <= na; ++i) cost[i][0] = opt_.skip_cost * static_cast<double>(i);
  for (std::size_t j = 0; j <= nb; ++j) cost[0][j] = opt_.skip_cost * static_cast<double>(j);
  for (std::size_t i = 1; i <= na; ++i) {
    for (std::size_t j = 1; j <= nb; ++j) {
      const double match = cost[i - 1][j - 1] + std::abs(lam(A[i - 1]) - lam(B[j - 1]));
      cost[i][j] = std::min({match, cost[i - 1][j] + opt_.skip_cost, cost[i][j - 1] + opt_.skip_cost});
    }
  }
  std::vector<bool> used_a(na, false), used_b(nb, false);
  std::size_t i = na;
  std::size_t j = nb;
  while (i > 0 && j > 0) {
    const double match = cost[i - 1][j - 1] + std::abs(lam(A[i - 1]) - lam(B[j - 1]));
    if (cost[i][j] == match) {
      add_edge(A[i - 1], B[j - 1]);
      used_a[i - 1] = used_b[j - 1] = true;
      --i;
      --j;
    } else if (cost[i][j] == cost[i - 1][j] + opt_.skip_cost) {
      --i;
    } else {
      --j;
    }
  }
  if (!refine_ends) return;

  auto runs = [](const std::vector<int>& slots, const std::vector<bool>& used) {
    std::vector<std::vector<int>> out;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (used[k]) continue;
      if (!out.empty() && out.back().back() == static_cast<int>(k) - 1) {
        out.back().push_back(static_cast<int>(k));
      } else {
        out.push_back({static_cast<int>(k)});
      }
    }
    return out;
  };
  for (const auto& run : runs(A, used_a)) close_run(ia, ib, run, true);
  for (const auto& run : runs(B, used_b)) close_run(ia, ib, run, false);
}

// Unmatched slots: adjacent pairs meet at a fold, singles leave through lambda = +-1.
void Tracer::close_run(std::size_t ia, std::size_t ib, const std::vector<int>& run_slots, bool on_a) {
  const auto& S = on_a ? slots_[ia] : slots_[ib];
  std::vector<int> ids;
  for (int k : run_slots) ids.push_back(S[static_cast<std::size_t>(k)]);
  // both copies of a touching root unmatched: the node itself is the fold
  std::vector<int> rest;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k + 1 < ids.size() && ids[k] == ids[k + 1]) {
      ++k;
      continue;
    }
    rest.push_back(ids[k]);
  }
  std::size_t k = 0;
  while (k + 1 < rest.size()) {
    const auto& u = nodes_[static_cast<std::size_t>(rest[k])];
    const auto& v = nodes_[static_cast<std::size_t>(rest[k + 1])];
    if (!insert_fold(ia, ib, u.lambda, v.lambda, rest[k], rest[k + 1])) break;
    k += 2;
  }
  for (; k < rest.size(); ++k) {
    insert_tangency(ia, ib, nodes_[static_cast<std::size_t>(rest[k])].lambda, rest[k]);
  }
}

bool Tracer::insert_fold(std::size_t ia, std::size_t ib, double la, double lb, int na, int nb) {
  auto crit_near = [&](const Vec& p, double hint, double* where) {
    const auto crit = lambda_critical_points(c_, p, opt_.roots);
    if (crit.empty()) throw DomainError("no critical point");
    const double best = *std::min_element(crit.begin(), crit.end(), [&](double u, double v) {
      return std::abs(u - hint) < std::abs(v - hint);
    });
    *where = best;
    return c_.g(best, p);
  };
  try {
    double hint = 0.5 * (la + lb);
    double l0 = hint;
    double l1 = hint;
    const double v0 = crit_near(cols_[ia].p, hint, &l0);
    const double v1 = crit_near(cols_[ib].p, hint, &l1);
    if (sign_of(v0) * sign_of(v1) > 0) return false;
    hint = l0;
    const double t = bisect_unit(
        [&](double s) {
          double l = hint;
          const double v = crit_near(on_sigma(lerp_x(ia, ib, s)), hint, &l);
          hint = l;
          return v;
        },
        opt_.refine_tol / std::max(1e-300, (cols_[ib].x - cols_[ia].x).norm()));
    const Vec x = lerp_x(ia, ib, t);
    double lc = hint;
    crit_near(on_sigma(x), hint, &lc);
    if (!(std::abs(lc) < 1.0)) return false;
    const int f = add_node(lc, x, -1);
    nodes_[static_cast<std::size_t>(f)].fold = true;
    add_edge(na, f);
    add_edge(f, nb);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

bool Tracer::insert_tangency(std::size_t ia, std::size_t ib, double lambda, int node) {
  const double ends[2] = {lambda >= 0 ? 1.0 : -1.0, lambda >= 0 ? -1.0 : 1.0};
  for (double end : ends) {
    try {
      const double ga = c_.g(end, cols_[ia].p);
      const double gb = c_.g(end, cols_[ib].p);
      if (sign_of(ga) * sign_of(gb) > 0 || (ga == 0.0 && gb == 0.0)) continue;
      const double t = bisect_unit([&](double s) { return c_.g(end, on_sigma(lerp_x(ia, ib, s))); },
                                   opt_.refine_tol / std::max(1e-300, (cols_[ib].x - cols_[ia].x).norm()));
      const int e = add_tangency_node(end, lerp_x(ia, ib, t));
      add_edge(node, e);
      return true;
    } catch (const DomainError&) {
    }
  }
  return false;
}

std::vector<SlowManifoldBranch> Tracer::polylines() const {
  const std::size_t n = nodes_.size();
  std::vector<std::vector<bool>> used(n);
  for (std::size_t i = 0; i < n; ++i) used[i].assign(adj_[i].size(), false);
  auto mark = [&](int a, int b) {
    const auto& la = adj_[static_cast<std::size_t>(a)];
    used[static_cast<std::size_t>(a)][static_cast<std::size_t>(std::find(la.begin(), la.end(), b) - la.begin())] = true;
    const auto& lb = adj_[static_cast<std::size_t>(b)];
    used[static_cast<std::size_t>(b)][static_cast<std::size_t>(std::find(lb.begin(), lb.end(), a) - lb.begin())] = true;
  };
  auto walk = [&](int start, std::size_t first_edge) {
    SlowManifoldBranch br;
    br.nodes.push_back(nodes_[static_cast<std::size_t>(start)]);
    int prev = start;
    int cur = adj_[static_cast<std::size_t>(start)][first_edge];
    mark(prev, cur);
    while (true) {
      br.nodes.push_back(nodes_[static_cast<std::size_t>(cur)]);
      const auto& nb = adj_[static_cast<std::size_t>(cur)];
      if (nb.size() != 2 || cur == start) break;
      const std::size_t e = used[static_cast<std::size_t>(cur)][0] ? 1 : 0;
      if (used[static_cast<std::size_t>(cur)][e]) break;
      prev = cur;
      cur = nb[e];
      mark(prev, cur);
    }
    br.closed = br.nodes.size() > 2 && cur == start;
    if (br.closed) br.nodes.pop_back();
    return br;
  };

  std::vector<SlowManifoldBranch> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (adj_[i].empty()) {
      SlowManifoldBranch br;
      br.nodes.push_back(nodes_[i]);
      out.push_back(std::move(br));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (adj_[i].size() == 2) continue;
    for (std::size_t e = 0; e < adj_[i].size(); ++e) {
      if (!used[i][e]) out.push_back(walk(static_cast<int>(i), e));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < adj_[i].size(); ++e) {
      if (!used[i][e]) out.push_back(walk(static_cast<int>(i), e));
    }
  }
  // orient by increasing x (then theta) and order deterministically
  for (auto& br : out) {
    const auto& f = br.nodes.front();
    const auto& l = br.nodes.back();
    if (!br.closed && (l.x[0] < f.x[0] || (l.x[0] == f.x[0] && l.theta < f.theta))) {
      std::reverse(br.nodes.begin(), br.nodes.end());
    }
  }
  std::sort(out.begin(), out.end(), [](const SlowManifoldBranch& a, const SlowManifoldBranch& b) {
    const auto& fa = a.nodes.front();
    const auto& fb = b.nodes.front();
    return fa.x[0] != fb.x[0] ? fa.x[0] < fb.x[0] : fa.theta < fb.theta;
  });
  return out;
}

std::vector<SlowManifoldBranch> Tracer::components() const {
  const std::size_t n = nodes_.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : adj_[i]) parent[find(i)] = find(static_cast<std::size_t>(j));
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<SlowManifoldBranch> out;
  for (auto& [root, members] : groups) {
    SlowManifoldBranch br;
    for (std::size_t i : members) br.nodes.push_back(nodes_[i]);
    std::sort(br.nodes.begin(), br.nodes.end(), [](const SlowManifoldNode& a, const SlowManifoldNode& b) {
      return a.grid_index != b.grid_index ? a.grid_index < b.grid_index : a.lambda < b.lambda;
    });
    out.push_back(std::move(br));
  }
  std::sort(out.begin(), out.end(), [](const SlowManifoldBranch& a, const SlowManifoldBranch& b) {
    const auto& fa = a.nodes.front();
    const auto& fb = b.nodes.front();
    return fa.grid_index != fb.grid_index ? fa.grid_index < fb.grid_index : fa.lambda < fb.lambda;
  });
  return out;
}

// x -> +-inf along a branch happens where the x-coefficient of g vanishes:
// the branch's root at |x| = cutoff sits next to a zero of dg/dx in lambda.
void Tracer::find_asymptotes(SlowManifold& out) const {
  const double far[2] = {opt_.asymptote_cutoff, -opt_.asymptote_cutoff};
  for (double X : far) {
    Vec x(1);
    x[0] = X;
    const Vec p = on_sigma(x);
    try {
      const auto roots = interior_roots(lambda_roots(c_, p, opt_.roots));
      const std::function<double(double)> gx = [&](double l) { return c_.dg_dx(l, p)[0]; };
      const std::function<double(double)> dgx = [&](double l) {
        const double h = 1e-7;
        return (gx(std::min(l + h, 1.0)) - gx(std::max(l - h, -1.0))) / (std::min(l + h, 1.0) - std::max(l - h, -1.0));
      };
      const auto zeros = unit_interval_roots(gx, dgx, opt_.roots, false);
      for (const auto& r : roots) {
        const LambdaRoot* best = nullptr;
        for (const auto& z : zeros) {
          if (!best || std::abs(z.lambda - r.lambda) < std::abs(best->lambda - r.lambda)) best = &z;
        }
        if (!best || std::abs(best->lambda - r.lambda) > 0.05) continue;
        Asymptote as;
        as.side = X > 0 ? 1 : -1;
        as.lambda0 = best->lambda;
        as.theta0 = sf_.transition().psi_inverse(best->lambda);
        // attach to the branch whose outermost grid node is closest in lambda
        double dist = 1e300;
        const long edge = X > 0 ? static_cast<long>(grid_.size()) - 1 : 0;
        for (std::size_t b = 0; b < out.branches.size(); ++b) {
          for (const auto& nd : out.branches[b].nodes) {
            if (nd.grid_index == edge && std::abs(nd.lambda - r.lambda) < dist) {
              dist = std::abs(nd.lambda - r.lambda);
              as.branch = static_cast<int>(b);
            }
          }
        }
        if (as.branch >= 0) out.branches[static_cast<std::size_t>(as.branch)].asymptotes.push_back(as);
        out.asymptotes.push_back(as);
      }
    } catch (const DomainError&) {
    }
  }
}

}  // namespace

SlowManifold trace_slow_manifold(const SlowFastSystem& sf, const ScanGrid& grid, const TraceOptions& opt) {
  if (grid.lo.size() != sf.slow_dim()) throw ModelError("slow-manifold grid must cover the n-1 slow coordinates");
  if (grid.size() == 0) throw ModelError("slow-manifold grid is empty");
  Tracer t(sf, grid, opt);
  return t.run();
}

// --- equilibria ----------------------------------------------------------------

namespace {

std::optional<ReducedEquilibrium> newton_equilibrium(const SlowFastSystem& sf, double lambda, Vec x) {
  const auto& c = sf.combination();
  const int m = sf.slow_dim();
  const int n = m + 1;
  auto residual = [&](double l, const Vec& xx) {
    const Vec p = on_sigma(xx);
    Vec F(n);
    F[0] = c.g(l, p);
    F.tail(m) = c.eval(l, p).head(m);
    return F;
  };
  try {
    Vec F = residual(lambda, x);
    for (int it = 0; it < 100 && F.norm() > 1e-15; ++it) {
      const Vec p = on_sigma(x);
      Mat J(n, n);
      J(0, 0) = c.dg_dlambda(lambda, p);
      J.block(0, 1, 1, m) = c.dg_dx(lambda, p).head(m).transpose();
      J.block(1, 0, m, 1) = c.d_lambda(lambda, p).head(m);
      J.block(1, 1, m, m) = c.jacobian_x(lambda, p).topLeftCorner(m, m);
      const Vec step = J.completeOrthogonalDecomposition().solve(-F);
      if (!step.allFinite()) return std::nullopt;
      lambda += step[0];
      x += step.tail(m);
      if (!(std::abs(lambda) < 1.0)) return std::nullopt;
      F = residual(lambda, x);
      if (step.norm() < 1e-16 * (1.0 + x.norm())) break;
    }
    if (!(std::abs(F[0]) < 1e-9 && F.tail(m).norm() < 1e-9)) return std::nullopt;
  } catch (const DomainError&) {
    return std::nullopt;
  }

  ReducedEquilibrium eq;
  eq.lambda = lambda;
  eq.theta = sf.transition().psi_inverse(lambda);
  eq.x = x;
  eq.residual = residual(lambda, x).norm();
  const Mat Jr = reduced_jacobian(sf, lambda, x, &eq.on_fold);
  if (m == 1) {
    eq.eigenvalues.emplace_back(Jr(0, 0), 0.0);
  } else {
    Eigen::EigenSolver<Mat> es(Jr, false);
    for (int i = 0; i < m; ++i) eq.eigenvalues.push_back(es.eigenvalues()[i]);
    std::sort(eq.eigenvalues.begin(), eq.eigenvalues.end(), [](auto a, auto b) {
      return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
  }
  double big = 1.0;
  for (auto e : eq.eigenvalues) big = std::max(big, std::abs(e));
  int neg = 0;
  int pos = 0;
  bool zero = false;
  for (auto e : eq.eigenvalues) {
    if (std::abs(e.real()) <= 1e-9 * big) {
      zero = true;
    } else {
      (e.real() < 0 ? neg : pos)++;
    }
  }
  if (zero || eq.on_fold) {
    eq.type = EquilibriumType::Degenerate;
  } else if (pos == 0) {
    eq.type = EquilibriumType::Attracting;
  } else if (neg == 0) {
    eq.type = EquilibriumType::Repelling;
  } else {
    eq.type = EquilibriumType::Saddle;
  }
  return eq;
}

}  // namespace

std::vector<ReducedEquilibrium> reduced_equilibria(const SlowFastSystem& sf, const SlowManifoldBranch& branch) {
  const auto& nodes = branch.nodes;
  if (nodes.empty()) throw ModelError("empty slow-manifold branch");
  const int m = sf.slow_dim();
  std::vector<double> size(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    try {
      size[i] = sf.beta(0.0, nodes[i].theta, nodes[i].x).norm();
    } catch (const DomainError&) {
      size[i] = 1e300;
    }
  }

  std::vector<std::pair<double, Vec>> seeds;
  if (m == 1) {
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      const double b0 = sf.beta(0.0, nodes[i].theta, nodes[i].x)[0];
      const double b1 = sf.beta(0.0, nodes[i + 1].theta, nodes[i + 1].x)[0];
      if (sign_of(b0) * sign_of(b1) <= 0) {
        const double w = b0 == b1 ? 0.5 : b0 / (b0 - b1);
        seeds.emplace_back(nodes[i].lambda + w * (nodes[i + 1].lambda - nodes[i].lambda),
                           nodes[i].x + w * (nodes[i + 1].x - nodes[i].x));
      }
    }
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
      if (size[i] <= size[i - 1] && size[i] <= size[i + 1]) seeds.emplace_back(nodes[i].lambda, nodes[i].x);
    }
  } else {
    // local minima of |beta| among nodes within ~1.5 grid spacings
    double h = 1e300;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size() && j < i + 4; ++j) {
        const double d = (nodes[i].x - nodes[j].x).norm();
        if (d > 0) h = std::min(h, d);
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      bool is_min = true;
      for (std::size_t j = 0; j < nodes.size() && is_min; ++j) {
        if (j != i && (nodes[i].x - nodes[j].x).norm() < 1.5 * h && size[j] < size[i]) is_min = false;
      }
      if (is_min) seeds.emplace_back(nodes[i].lambda, nodes[i].x);
    }
  }

  std::vector<ReducedEquilibrium> out;
  for (const auto& [l, x] : seeds) {
    auto eq = newton_equilibrium(sf, l, x);
    if (!eq) continue;
    const bool dup = std::any_of(out.begin(), out.end(), [&](const ReducedEquilibrium& e) {
      return std::abs(e.lambda - eq->lambda) < 1e-7 && (e.x - eq->x).norm() < 1e-7;
    });
    if (!dup) out.push_back(*eq);
  }
  std::sort(out.begin(), out.end(), [](const ReducedEquilibrium& a, const ReducedEquilibrium& b) {
    for (int i = 0; i < a.x.size(); ++i) {
      if (a.x[i] != b.x[i]) return a.x[i] < b.x[i];
    }
    return a.lambda < b.lambda;
  });
  return out;
}

}  // namespace nlslide
