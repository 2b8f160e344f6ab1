#include "nlslide/dynamics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <future>
#include <optional>

#include "nlslide/errors.hpp"
#include "nlslide/ode.hpp"

namespace nlslide {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Xplus: return "Xplus";
    case Regime::Xminus: return "Xminus";
    case Regime::SlidingBranch: return "SlidingBranch";
    case Regime::Regularized: return "Regularized";
    case Regime::Smooth: return "Smooth";
  }
  return "?";
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Cross: return "cross";
    case EventKind::EnterSliding: return "enter_sliding";
    case EventKind::ExitSliding: return "exit_sliding";
    case EventKind::ReachedBoundary: return "reached_boundary";
  }
  return "?";
}

// --- Trajectory ------------------------------------------------------------

void Trajectory::push_sample(double t, const Vec& state, const Vec& rate) {
  if (!samples_.empty() && samples_.back().t == t) {
    samples_.back().rate_out = rate;
    return;
  }
  samples_.push_back({t, state, rate, rate});
}

void Trajectory::open_segment(double t, Regime regime, int branch, double eps) {
  segments_.push_back({t, t, regime, branch, eps});
}

void Trajectory::close_segment(double t) {
  if (!segments_.empty()) segments_.back().t_end = t;
}

void Trajectory::reverse_time_order() {
  std::reverse(samples_.begin(), samples_.end());
  for (auto& s : samples_) std::swap(s.rate_in, s.rate_out);
  std::reverse(segments_.begin(), segments_.end());
  for (auto& s : segments_) std::swap(s.t_start, s.t_end);
  std::reverse(events_.begin(), events_.end());
}

Vec Trajectory::state_at(double t) const {
  if (samples_.empty()) throw ModelError("empty trajectory");
  if (t <= samples_.front().t) return samples_.front().state;
  if (t >= samples_.back().t) return samples_.back().state;
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                   [](double v, const Sample& s) { return v < s.t; });
  const Sample& b = *it;
  const Sample& a = *(it - 1);
  return hermite<double>(a.t, a.state, a.rate_out, b.t, b.state, b.rate_in, t);
}

const Segment& Trajectory::segment_at(double t) const {
  if (segments_.empty()) throw ModelError("trajectory has no segments");
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
    if (t >= std::min(it->t_start, it->t_end)) return *it;
  }
  return segments_.front();
}

void IntegratorConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("integration tolerances must be positive");
  if (!(event_tol > 0.0)) throw ConfigError("event tolerance must be positive");
  if (!(max_step > 0.0)) throw ConfigError("max step must be positive");
  if (max_events < 1) throw ConfigError("max events must be at least 1");
  if (output_dt < 0.0) throw ConfigError("output interval must be non-negative");
}

// --- stepping core ---------------------------------------------------------

namespace {

// Thrown by a right-hand side to force a step rejection.
struct RootLost {};

enum class StopReason { Horizon, Callback, RootLost };

struct PhaseEnd {
  double t;
  Vec y;
  StopReason reason;
};

struct Accepted {
  double t0, t1;
  const Vec& y0;
  const Vec& y1;
  const Vec& f1;
  const DenseStep<double>& dense;
};

// Runs DP45 from (t0, y0) toward t_end. `on_step` sees each accepted step and
// returns true to stop the phase (the caller records where). RootLost from
// `rhs` shrinks the step; when the step underflows after such a loss the
// phase ends at the last accepted point.
template <class Rhs, class OnStep>
PhaseEnd drive(Rhs&& rhs, double t0, Vec y0, double t_end, const IntegratorConfig& cfg, long& steps,
               OnStep&& on_step) {
  const DormandPrince<double> dp({cfg.rtol, cfg.atol, cfg.max_step});
  const double dir = t_end >= t0 ? 1.0 : -1.0;
  double t = t0;
  Vec y = std::move(y0);
  Vec f = rhs(t, y);
  double h;
  try {
    h = dp.initial_step(rhs, t, y, f, dir);
  } catch (const RootLost&) {
    h = dir * std::min(1e-3, cfg.max_step);
  }
  bool lost = false;
  while (dir * (t_end - t) > 0.0) {
    if (++steps > cfg.max_steps) throw IntegrationError(t, "step budget exhausted");
    const double remaining = t_end - t;
    const bool last = std::abs(h) >= std::abs(remaining);
    if (last) h = remaining;
    const double h_min = 64.0 * DBL_EPSILON * std::max(1.0, std::abs(t));
    DormandPrince<double>::Attempt a;
    try {
      a = dp.attempt(rhs, t, y, f, h);
    } catch (const RootLost&) {
      lost = true;
      a.accepted = false;
      a.h_next = 0.5 * h;
    }
    if (!a.accepted) {
      if (std::abs(h) < h_min) {
        if (lost) return {t, y, StopReason::RootLost};
        throw IntegrationError(t, "step size underflow; increase eps or relax the tolerances");
      }
      h = a.h_next;
      continue;
    }
    const double t1 = last ? t_end : t + h;
    if (on_step(Accepted{t, t1, y, a.y1, a.f1, a.dense})) return {t1, a.y1, StopReason::Callback};
    t = t1;
    y = std::move(a.y1);
    f = std::move(a.f1);
    h = a.h_next;
    lost = false;
  }
  return {t, y, StopReason::Horizon};
}

// Output-grid times strictly inside (t0, t1), in integration order.
std::vector<double> grid_times(double t0, double t1, double dt) {
  std::vector<double> out;
  if (!(dt > 0.0)) return out;
  const double lo = std::min(t0, t1), hi = std::max(t0, t1);
  for (double k = std::floor(lo / dt) + 1.0; k * dt < hi; k += 1.0) {
    if (k * dt > lo) out.push_back(k * dt);
  }
  if (t1 < t0) std::reverse(out.begin(), out.end());
  return out;
}

double output_interval(const IntegratorConfig& cfg, double T) {
  return cfg.output_dt > 0.0 ? cfg.output_dt : std::abs(T) / 1000.0;
}

Trajectory run_smooth(const VectorField& field, const Vec& p0, double T, const IntegratorConfig& cfg, Regime regime,
                      double eps) {
  cfg.validate();
  if (!std::isfinite(T)) throw ModelError("integration horizon must be finite");
  Trajectory traj;
  auto rhs = [&](double t, const Vec& y) -> Vec {
    try {
      return field(y);
    } catch (const DomainError& e) {
      throw IntegrationError(t, std::string("field evaluation failed: ") + e.what());
    }
  };
  traj.open_segment(0.0, regime, -1, eps);
  traj.push_sample(0.0, p0, rhs(0.0, p0));
  const double dt = output_interval(cfg, T);
  long steps = 0;
  drive(rhs, 0.0, p0, T, cfg, steps, [&](const Accepted& s) {
    for (double tk : grid_times(s.t0, s.t1, dt)) {
      const Vec yk = s.dense(tk);
      traj.push_sample(tk, yk, rhs(tk, yk));
    }
    traj.push_sample(s.t1, s.y1, s.f1);
    return false;
  });
  traj.close_segment(T);
  if (T < 0.0) traj.reverse_time_order();
  return traj;
}

}  // namespace

Trajectory integrate_smooth(const VectorField& field, const Vec& p0, double T, const IntegratorConfig& cfg) {
  return run_smooth(field, p0, T, cfg, Regime::Smooth, 0.0);
}

Trajectory integrate_regularized(const ContinuousCombination& c, const TransitionFunction& phi, double eps,
                                 const Vec& p0, double T, const IntegratorConfig& cfg) {
  if (!(eps > 0.0)) throw ModelError("eps must be positive");
  if (p0.size() != c.dim()) throw ModelError("initial point has the wrong dimension");
  const SmoothField f = nonlinear_regularization(c, phi, eps);
  Trajectory traj = run_smooth(f.value, p0, T, cfg, Regime::Regularized, eps);
  const double scale = std::max(1.0, p0.lpNorm<Eigen::Infinity>());
  if (eps < 1e2 * DBL_EPSILON * scale) {
    traj.warn("eps is below 1e2 * machine epsilon * trajectory scale; the transition layer is unresolved");
  }
  return traj;
}

// --- hybrid integration ----------------------------------------------------

namespace {

enum class Mode { Plus, Minus, Slide, Stop };

class Hybrid {
 public:
  Hybrid(const ContinuousCombination& c, const BranchPolicy& policy, const IntegratorConfig& cfg)
      : c_(c), sys_(c.base()), policy_(policy), cfg_(cfg), n_(c.dim()) {}

  Trajectory run(const Vec& p0, double T) {
    double t = 0.0;
    Vec p = p0;
    const double h0 = sys_.h_value(p);
    int came_from = 0;
    Mode mode;
    if (h0 > cfg_.event_tol) {
      mode = Mode::Plus;
    } else if (h0 < -cfg_.event_tol) {
      mode = Mode::Minus;
    } else {
      p = snap(p);
      mode = on_sigma(t, p, 0);
    }
    while (mode != Mode::Stop && t < T) {
      if (mode == Mode::Slide) {
        mode = slide(t, p, T);
      } else {
        came_from = mode == Mode::Plus ? 1 : -1;
        mode = smooth(t, p, T, came_from);
      }
      if (static_cast<int>(traj_.events().size()) > cfg_.max_events) {
        throw IntegrationError(t, "more than " + std::to_string(cfg_.max_events) +
                                      " events; chattering near a tangency is likely");
      }
    }
    if (traj_.samples().empty()) traj_.push_sample(t, p, Vec::Zero(n_));
    return std::move(traj_);
  }

 private:
  Vec snap(Vec p) const {
    for (int it = 0; it < 4; ++it) {
      const double h = sys_.h_value(p);
      if (h == 0.0) break;
      const Vec g = sys_.grad_h(p);
      const double gg = g.squaredNorm();
      if (gg == 0.0) break;
      p -= (h / gg) * g;
    }
    return p;
  }

  double tau(double a, double b) const { return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

  // Chooses what happens at a point of Sigma. `came_from` is +1/-1 for the
  // side we arrived from, 0 at the start.
  Mode on_sigma(double t, const Vec& p, int came_from) {
    const auto roots = interior_roots(lambda_roots(c_, p, cfg_.roots));
    if (!roots.empty()) {
      const int l = static_cast<int>(roots.size());
      int k = 0;
      switch (policy_.kind) {
        case BranchPolicy::Kind::Error:
          if (l > 1) throw AmbiguousBranch(std::to_string(l) + " sliding branches at entry (t = " + std::to_string(t) + ")");
          break;
        case BranchPolicy::Kind::Fixed:
          if (policy_.index < 0 || policy_.index >= l) {
            throw AmbiguousBranch("branch " + std::to_string(policy_.index) + " requested but " + std::to_string(l) +
                                  " exist at entry (t = " + std::to_string(t) + ")");
          }
          k = policy_.index;
          break;
        case BranchPolicy::Kind::Continuity:
          if (l > 1) {
            if (policy_.index < 0 || policy_.index >= l) {
              throw AmbiguousBranch(std::to_string(l) + " sliding branches at entry (t = " + std::to_string(t) +
                                    "); specify a branch index");
            }
            k = policy_.index;
          }
          break;
      }
      const auto& r = roots[static_cast<std::size_t>(k)];
      lambda_ = r.lambda;
      branch_ = k;
      slope_sign_ = r.slope > 0 ? 1 : (r.slope < 0 ? -1 : 0);
      degenerate_ = !r.transversal;
      traj_.add_event(t, EventKind::EnterSliding, p);
      return Mode::Slide;
    }
    const double a = sys_.plus_lie(p), b = sys_.minus_lie(p), tl = tau(a, b);
    Mode next = Mode::Stop;
    if (came_from > 0) {
      next = b < -tl ? Mode::Minus : (a > tl ? Mode::Plus : Mode::Stop);
    } else if (came_from < 0) {
      next = a > tl ? Mode::Plus : (b < -tl ? Mode::Minus : Mode::Stop);
    } else if (a > tl && b > tl) {
      next = Mode::Plus;
    } else if (a < -tl && b < -tl) {
      next = Mode::Minus;
    }
    if (next == Mode::Stop) {
      traj_.add_event(t, EventKind::ReachedBoundary, p);
      traj_.mark_stopped_early();
    } else if ((next == Mode::Plus) != (came_from > 0) || came_from == 0) {
      if (came_from != 0) traj_.add_event(t, EventKind::Cross, p);
    }
    return next;
  }

  Mode smooth(double& t, Vec& p, double T, int side) {
    const double s = side;
    auto rhs = [&](double tt, const Vec& y) -> Vec {
      try {
        return side > 0 ? sys_.plus(y) : sys_.minus(y);
      } catch (const DomainError& e) {
        throw IntegrationError(tt, std::string("field evaluation failed: ") + e.what());
      }
    };
    traj_.open_segment(t, side > 0 ? Regime::Xplus : Regime::Xminus);
    traj_.push_sample(t, p, rhs(t, p));
    const double dt = output_interval(cfg_, T);
    std::optional<std::pair<double, Vec>> hit;
    const PhaseEnd end = drive(rhs, t, p, T, cfg_, steps_, [&](const Accepted& st) {
      double t_stop = st.t1;
      if (s * sys_.h_value(st.y1) <= 0.0) {
        double lo = st.t0, hi = st.t1;
        double best = hi;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double hm = sys_.h_value(st.dense(mid));
          best = mid;
          if (std::abs(hm) <= cfg_.event_tol || mid == lo || mid == hi) break;
          (s * hm > 0.0 ? lo : hi) = mid;
        }
        t_stop = best;
        hit.emplace(best, snap(st.dense(best)));
      }
      for (double tk : grid_times(st.t0, t_stop, dt)) {
        const Vec yk = st.dense(tk);
        traj_.push_sample(tk, yk, rhs(tk, yk));
      }
      if (hit) {
        traj_.push_sample(hit->first, hit->second, rhs(hit->first, hit->second));
        return true;
      }
      traj_.push_sample(st.t1, st.y1, st.f1);
      return false;
    });
    if (!hit) {
      t = end.t;
      p = end.y;
      traj_.close_segment(t);
      return Mode::Stop;
    }
    t = hit->first;
    p = hit->second;
    traj_.close_segment(t);
    return on_sigma(t, p, side);
  }

  // --- sliding ---

  std::optional<Vec> lift(const Vec& x, double guess) const { return lift_to_manifold(sys_, x, guess); }

  std::optional<double> track(const Vec& p, double ref) const {
    double l = ref;
    double scale = 1.0;
    for (double v : {-1.0, 0.0, 1.0}) scale = std::max(scale, std::abs(c_.g(v, p)));
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      const double g = c_.g(l, p);
      if (std::abs(g) <= 1e-15 * scale) {
        ok = true;
        break;
      }
      const double d = c_.dg_dlambda(l, p);
      if (d == 0.0 || !std::isfinite(d)) return std::nullopt;
      const double step = g / d;
      l -= step;
      if (!(std::abs(l) <= 1.0)) return std::nullopt;
      if (std::abs(step) <= 1e-15) {
        ok = std::abs(c_.g(l, p)) <= 1e-10 * scale;
        break;
      }
    }
    if (!ok) return std::nullopt;
    if (std::abs(l - ref) > 0.2 || std::abs(l) >= 1.0 - 1e-9) return std::nullopt;
    if (!degenerate_) {
      const double d = c_.dg_dlambda(l, p);
      const int sign = d > 0 ? 1 : (d < 0 ? -1 : 0);
      if (sign != slope_sign_ || std::abs(d) <= cfg_.roots.transversal_tol * scale) return std::nullopt;
    }
    return l;
  }

  Mode slide(double& t, Vec& p, double T) {
    const int m = n_ - 1;
    double guess = p[m];
    double lambda_ref = lambda_;
    auto ambient = [&](const Vec& x) -> std::pair<Vec, double> {
      const auto q = lift(x, guess);
      if (!q) throw RootLost{};
      const auto l = track(*q, lambda_ref);
      if (!l) throw RootLost{};
      return {*q, *l};
    };
    auto rhs = [&](double, const Vec& x) -> Vec {
      const auto [q, l] = ambient(x);
      return c_.eval(l, q).head(m);
    };
    traj_.open_segment(t, Regime::SlidingBranch, branch_);
    traj_.push_sample(t, p, c_.eval(lambda_ref, p));
    const double dt = output_interval(cfg_, T);
    const PhaseEnd end = drive(rhs, t, Vec(p.head(m)), T, cfg_, steps_, [&](const Accepted& st) {
      for (double tk : grid_times(st.t0, st.t1, dt)) {
        try {
          const auto [q, l] = ambient(st.dense(tk));
          traj_.push_sample(tk, q, c_.eval(l, q));
        } catch (const RootLost&) {
        }
      }
      const auto [q, l] = ambient(st.y1);
      lambda_ref = l;
      guess = q[m];
      traj_.push_sample(st.t1, q, c_.eval(l, q));
      return false;
    });
    const auto q = lift(end.y, guess);
    p = q ? *q : p;
    t = end.t;
    traj_.close_segment(t);
    if (end.reason != StopReason::RootLost) return Mode::Stop;

    // The tracked root vanished: decide the exit side just beyond this point.
    const Vec F = c_.eval(lambda_ref, p);
    const double delta = 1e-6 / std::max(1.0, F.head(m).norm());
    auto along = [&](double s) { return lift(Vec(p.head(m) + s * F.head(m)), p[m]); };
    const auto beyond = along(delta);
    // Exit through lambda = +-1 is detected 1e-9 short of the tangency; move
    // onto it (an O(delta^2) Euler extension) so the next field leaves Sigma.
    const double end_lambda = lambda_ref > 0 ? 1.0 : -1.0;
    if (beyond && std::abs(lambda_ref) > 0.5) {
      const double g0 = c_.g(end_lambda, p), g1 = c_.g(end_lambda, *beyond);
      if (g0 != 0.0 && (g0 > 0) != (g1 > 0)) {
        double lo = 0.0, hi = delta;
        for (int it = 0; it < 80 && hi - lo > 0.0; ++it) {
          const double mid = 0.5 * (lo + hi);
          const auto q = along(mid);
          if (!q) break;
          ((c_.g(end_lambda, *q) > 0) == (g0 > 0) ? lo : hi) = mid;
        }
        if (const auto q = along(hi)) {
          p = *q;
          t += hi;
          traj_.push_sample(t, p, c_.eval(end_lambda, p));
          traj_.close_segment(t);
        }
      }
    }
    const double l_exit = std::clamp(lambda_ref, -1.0, 1.0);
    const double side = beyond ? c_.g(l_exit, *beyond) : 0.0;
    bool consistent = false;
    if (beyond && side > 0.0) consistent = sys_.plus_lie(*beyond) > 0.0;
    if (beyond && side < 0.0) consistent = sys_.minus_lie(*beyond) < 0.0;
    if (!consistent) {
      traj_.add_event(t, EventKind::ReachedBoundary, p);
      traj_.mark_stopped_early();
      return Mode::Stop;
    }
    traj_.add_event(t, EventKind::ExitSliding, p);
    return side > 0.0 ? Mode::Plus : Mode::Minus;
  }

  const ContinuousCombination& c_;
  const PiecewiseSystem& sys_;
  BranchPolicy policy_;
  IntegratorConfig cfg_;
  int n_;
  Trajectory traj_;
  long steps_ = 0;
  double lambda_ = 0.0;
  int branch_ = -1;
  int slope_sign_ = 0;
  bool degenerate_ = false;
};

}  // namespace

Trajectory integrate_filippov(const ContinuousCombination& c, const Vec& p0, double T, const BranchPolicy& policy,
                              const IntegratorConfig& cfg) {
  cfg.validate();
  if (!(T > 0.0) || !std::isfinite(T)) throw ModelError("hybrid integration needs a positive finite horizon");
  if (p0.size() != c.dim()) throw ModelError("initial point has the wrong dimension");
  return Hybrid(c, policy, cfg).run(p0, T);
}

double sup_distance(const Trajectory& a, const Trajectory& b, double T, int points) {
  double sup = 0.0;
  for (int k = 0; k < points; ++k) {
    const double t = T * static_cast<double>(k) / static_cast<double>(points - 1);
    sup = std::max(sup, (a.state_at(t) - b.state_at(t)).norm());
  }
  return sup;
}

ConvergenceResult convergence_check(const ContinuousCombination& c, const TransitionFunction& phi, const Vec& p0,
                                    double T, const std::vector<double>& eps_list, const BranchPolicy& policy,
                                    const IntegratorConfig& cfg) {
  if (eps_list.size() < 3) throw ConfigError("convergence check needs at least three eps values");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw ConfigError("eps values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ConfigError("eps values must be strictly decreasing");
  }
  ConvergenceResult out;
  out.reference = integrate_filippov(c, p0, T, policy, cfg);
  const Trajectory& ref = out.reference;

  std::vector<std::future<ConvergenceRow>> jobs;
  for (double eps : eps_list) {
    jobs.push_back(std::async(std::launch::async, [&, eps] {
      ConvergenceRow row{eps, 0.0, false, {}};
      try {
        const Trajectory tr = integrate_regularized(c, phi, eps, p0, T, cfg);
        row.error = sup_distance(tr, ref, T);
      } catch (const Error& e) {
        row.failed = true;
        row.message = e.category() + ": " + e.what();
      }
      return row;
    }));
  }
  for (auto& j : jobs) out.rows.push_back(j.get());

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (const auto& r : out.rows) {
    if (r.failed || !(r.error > 0.0)) continue;
    const double x = std::log(r.eps), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  if (k >= 2) {
    const double den = k * sxx - sx * sx;
    if (den != 0.0) {
      out.slope = (k * sxy - sx * sy) / den;
      out.slope_valid = true;
    }
  }
  return out;
}

}  // namespace nlslide
