#pragma once

// Polar blow-up of the nonlinear regularization into a slow-fast system.
//
// With h = y (last coordinate), lambda = psi(theta) and y = r cos(theta):
//   alpha0(r, theta, x) = s_n(psi(theta), x, r cos theta)
//   beta(r, theta, x)   = (s_1, ..., s_{n-1})(psi(theta), x, r cos theta)
// slow time:  r theta' = -sin(theta) alpha0,  x' = beta
// fast time (t = tau / r):  theta' = -sin(theta) alpha0,  x' = r beta

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "nlslide/psvf.hpp"
#include "nlslide/sliding.hpp"

namespace nlslide {

class SlowFastSystem {
 public:
  const ContinuousCombination& combination() const { return c_; }
  const TransitionFunction& transition() const { return phi_; }
  int slow_dim() const { return c_.dim() - 1; }

  /// Closed forms in (r, theta, x...) exist for tanh and asymptotic custom
  /// profiles; the sharp profile is piecewise and is evaluated in lambda form.
  bool has_closed_form() const { return alpha0_expr_.has_value(); }
  const Expression& alpha0_expression() const;
  const std::vector<Expression>& beta_expressions() const;

  double alpha0(double r, double theta, const Vec& x) const;
  Vec beta(double r, double theta, const Vec& x) const;
  /// Chain rule: psi'(theta) ds_n/dlambda - r sin(theta) ds_n/dy.
  double dalpha0_dtheta(double r, double theta, const Vec& x) const;

  /// (theta', x') in slow time; needs r > 0.
  Vec slow_field(double r, double theta, const Vec& x) const;
  /// (theta', x') in fast time.
  Vec fast_field(double r, double theta, const Vec& x) const;

 private:
  friend SlowFastSystem build_slow_fast(const ContinuousCombination& c, const TransitionFunction& phi);
  SlowFastSystem(ContinuousCombination c, TransitionFunction phi) : c_(std::move(c)), phi_(std::move(phi)) {}
  Vec ambient(double r, double theta, const Vec& x) const;

  ContinuousCombination c_;
  TransitionFunction phi_;
  std::optional<Expression> alpha0_expr_;
  std::vector<Expression> beta_expr_;
};

/// CoordinateFormError unless h is literally the last variable.
SlowFastSystem build_slow_fast(const ContinuousCombination& c, const TransitionFunction& phi);

// --- blow-up maps ----------------------------------------------------------

struct BlowupImages {
  Vec polar;        // Lambda(r, theta, x) = (x, r cos theta, r sin theta)
  Vec directional;  // Gamma(G(r, theta, x)), Gamma(x, yb, eb) = (x, eb yb, eb), G = (x, cot theta, r sin theta)
};

BlowupImages blowup_maps(double r, double theta, const Vec& x);

// --- slow manifold -----------------------------------------------------------

struct SlowManifoldNode {
  double theta = 0.0;
  double lambda = 0.0;  // psi(theta)
  Vec x;
  bool hyperbolic = true;
  double dalpha_dtheta = 0.0;
  bool meets_tangency = false;  // clipped end at theta = delta or pi - delta
  bool fold = false;            // inserted where two roots merge
  long grid_index = -1;         // -1 for refined (off-grid) nodes
};

struct Asymptote {
  int side = 1;          // x -> +inf or -inf along the first slow axis
  double lambda0 = 0.0;  // psi(theta0)
  double theta0 = 0.0;
  int branch = -1;
};

struct SlowManifoldBranch {
  std::vector<SlowManifoldNode> nodes;  // polyline order (1-D) or grid order (2-D and up)
  bool closed = false;
  std::vector<Asymptote> asymptotes;
  bool all_hyperbolic() const;
};

struct SlowManifold {
  std::vector<SlowManifoldBranch> branches;
  std::vector<Asymptote> asymptotes;
  /// Grid nodes (grid_index >= 0) at the given grid point.
  std::vector<const SlowManifoldNode*> nodes_at(long grid_index) const;
};

struct TraceOptions {
  RootOptions roots;
  double delta = 1e-6;
  double hyperbolic_tol = 1e-7;
  double asymptote_cutoff = 1e3;
  double skip_cost = 0.3;
  double refine_tol = 1e-12;
  unsigned threads = 0;
};

SlowManifold trace_slow_manifold(const SlowFastSystem& sf, const ScanGrid& grid, const TraceOptions& opt = {});

/// Hyperbolicity test used by the tracer: |dalpha0/dtheta| > tol |psi'| max(1, S),
/// where S is the size of ds_n/dlambda over [-1, 1] at x. Since psi' < 0 on
/// (0, pi) this is |ds_n/dlambda| > tol max(1, S), which stays meaningful where
/// psi' underflows next to theta = 0, pi.
bool is_hyperbolic(const SlowFastSystem& sf, double theta, const Vec& x, double tol = 1e-7);

/// beta(0, theta, x); NotOnManifold if |alpha0(0, theta, x)| exceeds tol.
Vec reduced_flow(const SlowFastSystem& sf, double theta, const Vec& x, double tol = 1e-9);

enum class EquilibriumType { Attracting, Repelling, Saddle, Degenerate };
std::string to_string(EquilibriumType t);

struct ReducedEquilibrium {
  double theta = 0.0;
  double lambda = 0.0;
  Vec x;
  std::vector<std::complex<double>> eigenvalues;
  EquilibriumType type = EquilibriumType::Degenerate;
  double residual = 0.0;
  bool on_fold = false;  // dg/dlambda vanishes there
};

std::vector<ReducedEquilibrium> reduced_equilibria(const SlowFastSystem& sf, const SlowManifoldBranch& branch);

/// Jacobian of x -> beta(0, theta(x), x) along the branch through (lambda, x).
Mat reduced_jacobian(const SlowFastSystem& sf, double lambda, const Vec& x, bool* on_fold = nullptr);

}  // namespace nlslide
