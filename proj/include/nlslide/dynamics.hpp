#pragma once

// Trajectories of the regularized smooth system and of the hybrid
// (piecewise + nonlinear sliding) limit dynamics.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nlslide/psvf.hpp"
#include "nlslide/sliding.hpp"

namespace nlslide {

enum class Regime { Xplus, Xminus, SlidingBranch, Regularized, Smooth };
std::string to_string(Regime r);

enum class EventKind { Cross, EnterSliding, ExitSliding, ReachedBoundary };
std::string to_string(EventKind k);

struct Sample {
  double t = 0.0;
  Vec state;
  Vec rate_in;   // derivative from the left
  Vec rate_out;  // derivative from the right (differs at switching events)
};

struct Segment {
  double t_start = 0.0;
  double t_end = 0.0;
  Regime regime = Regime::Smooth;
  int branch = -1;   // SlidingBranch only
  double eps = 0.0;  // Regularized only
};

struct Event {
  double t = 0.0;
  EventKind kind = EventKind::Cross;
  Vec state;
};

class Trajectory {
 public:
  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Event>& events() const { return events_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int dim() const { return samples_.empty() ? 0 : static_cast<int>(samples_.front().state.size()); }

  double t_start() const { return samples_.front().t; }
  double t_end() const { return samples_.back().t; }
  const Vec& final_state() const { return samples_.back().state; }
  /// True when integration stopped before the requested horizon (reached_boundary).
  bool stopped_early() const { return stopped_early_; }

  /// Piecewise cubic Hermite interpolation; clamps outside [t_start, t_end].
  Vec state_at(double t) const;
  /// Segment active at time t (the later one at a switching instant).
  const Segment& segment_at(double t) const;

  // Builders used by the integrators.
  void push_sample(double t, const Vec& state, const Vec& rate);
  void open_segment(double t, Regime regime, int branch = -1, double eps = 0.0);
  void close_segment(double t);
  void add_event(double t, EventKind kind, const Vec& state) { events_.push_back({t, kind, state}); }
  void warn(std::string message) { warnings_.push_back(std::move(message)); }
  void mark_stopped_early() { stopped_early_ = true; }
  /// Reorders a backward-time integration so samples increase in t.
  void reverse_time_order();

 private:
  std::vector<Sample> samples_;
  std::vector<Segment> segments_;
  std::vector<Event> events_;
  std::vector<std::string> warnings_;
  bool stopped_early_ = false;
};

struct IntegratorConfig {
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  double event_tol = 1e-12;  // |h| at located events
  int max_events = 10000;
  long max_steps = 10000000;
  double output_dt = 0.0;  // extra dense samples; 0 means |T| / 1000
  RootOptions roots;

  void validate() const;  // throws ConfigError
};

using VectorField = std::function<Vec(const Vec&)>;

Trajectory integrate_smooth(const VectorField& field, const Vec& p0, double T, const IntegratorConfig& cfg = {});

Trajectory integrate_regularized(const ContinuousCombination& c, const TransitionFunction& phi, double eps,
                                 const Vec& p0, double T, const IntegratorConfig& cfg = {});

struct BranchPolicy {
  enum class Kind { Fixed, Continuity, Error };
  Kind kind = Kind::Continuity;
  int index = -1;  // Fixed: required; Continuity: used when several branches exist at entry

  static BranchPolicy fixed(int k) { return {Kind::Fixed, k}; }
  static BranchPolicy continuity(int k = -1) { return {Kind::Continuity, k}; }
  static BranchPolicy error() { return {Kind::Error, -1}; }
};

Trajectory integrate_filippov(const ContinuousCombination& c, const Vec& p0, double T,
                              const BranchPolicy& policy = {}, const IntegratorConfig& cfg = {});

/// Sup over `points` uniform times in [0, T] of |a(t) - b(t)|.
double sup_distance(const Trajectory& a, const Trajectory& b, double T, int points = 4001);

struct ConvergenceRow {
  double eps = 0.0;
  double error = 0.0;
  bool failed = false;
  std::string message;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;  // ordered as the input eps list
  double slope = 0.0;                // least-squares slope of log(error) vs log(eps)
  bool slope_valid = false;
  Trajectory reference;
};

ConvergenceResult convergence_check(const ContinuousCombination& c, const TransitionFunction& phi, const Vec& p0,
                                    double T, const std::vector<double>& eps_list, const BranchPolicy& policy = {},
                                    const IntegratorConfig& cfg = {});

}  // namespace nlslide
