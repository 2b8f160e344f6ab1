#pragma once

// Classification of switching-manifold points and extraction of the
// nonlinear sliding vector fields X~(lambda(p), p), g(lambda(p), p) = 0.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlslide/psvf.hpp"

namespace nlslide {

enum class PointKind { Sewing, Sliding, Singular };

struct PointClass {
  PointKind kind = PointKind::Singular;
  double plus_lie = 0.0;   // (X+ . h)(p)
  double minus_lie = 0.0;  // (X- . h)(p)
  bool plus_tangent = false;
  bool minus_tangent = false;

  std::string label() const;  // "sewing" | "sliding" | "singular+" | "singular-" | "singular+-"
};

struct ClassifyOptions {
  double singular_tol = 1e-10;
  double manifold_tol = 1e-9;
};

PointClass classify(const PiecewiseSystem& sys, const Vec& p, const ClassifyOptions& opt = {});

struct LambdaRoot {
  double lambda = 0.0;
  bool transversal = true;
  bool endpoint = false;  // lambda = +-1: tangency of X+ or X-
  double residual = 0.0;
  double slope = 0.0;  // dg/dlambda at the root
};

struct RootOptions {
  int samples = 1025;
  double bisect_tol = 1e-13;
  double degenerate_tol = 1e-9;  // |g| accepted for an even-multiplicity root
  double dedup_tol = 1e-8;
  double transversal_tol = 1e-7;  // relative to max(1, sup |g|)
  double manifold_tol = 1e-9;
};

/// All zeros of lambda -> g(lambda, p) on [-1, 1], strictly increasing.
std::vector<LambdaRoot> lambda_roots(const ContinuousCombination& c, const Vec& p, const RootOptions& opt = {});

/// The scanner behind lambda_roots, for any smooth f on [-1, 1].
std::vector<LambdaRoot> unit_interval_roots(const std::function<double(double)>& f,
                                            const std::function<double(double)>& df, const RootOptions& opt,
                                            bool include_endpoints);

/// Roots strictly inside (-1, 1). Branch indices count these only.
std::vector<LambdaRoot> interior_roots(const std::vector<LambdaRoot>& roots);

enum class NonlinearKind { Sewing, Sliding };

struct NonlinearPointClass {
  NonlinearKind kind = NonlinearKind::Sewing;
  std::vector<LambdaRoot> roots;  // every root, endpoints included
  int n_branches() const { return static_cast<int>(interior_roots(roots).size()); }
  std::string label() const { return kind == NonlinearKind::Sewing ? "nl_sewing" : "nl_sliding"; }
};

NonlinearPointClass nonlinear_classify(const ContinuousCombination& c, const Vec& p, const RootOptions& opt = {});

/// X~(lambda_k(p), p) for interior branch k.
Vec sliding_field(const ContinuousCombination& c, const Vec& p, int branch, const RootOptions& opt = {});

/// Closed-form Filippov parameter for a zero-correction combination at a
/// classical sliding point: (X+.h + X-.h) / (X-.h - X+.h).
double filippov_lambda(const PiecewiseSystem& sys, const Vec& p);

/// Newton on the last coordinate so that h(x, y) = 0; nullopt if it fails.
std::optional<Vec> lift_to_manifold(const PiecewiseSystem& sys, const Vec& x, double y0 = 0.0);

// --- region scan -----------------------------------------------------------

struct ScanGrid {
  Vec lo, hi;                // over the first n-1 coordinates
  std::vector<int> points;   // samples per axis (>= 2)

  /// Uniform grid with the given step (rounded to hit `hi`).
  static ScanGrid with_step(const Vec& lo, const Vec& hi, double step);
  std::size_t size() const;
  Vec at(std::size_t index) const;
  std::vector<int> unravel(std::size_t index) const;
};

struct ScanPoint {
  Vec x;          // Sigma coordinates
  Vec p;          // full point on Sigma
  bool valid = false;
  std::string error;  // why the point is invalid
  PointClass cls;
  NonlinearPointClass nl;
};

enum class BoundaryKind { TangencyPlus, TangencyMinus, Fold, Unresolved };
std::string to_string(BoundaryKind k);

struct Boundary {
  Vec x;  // refined location in Sigma coordinates
  int axis = 0;
  BoundaryKind kind = BoundaryKind::Unresolved;
  int n_before = 0;
  int n_after = 0;
  double width = 0.0;  // final bracket width along the axis
};

struct ScanResult {
  ScanGrid grid;
  std::vector<ScanPoint> points;  // row-major, last axis fastest
  std::vector<Boundary> boundaries;
  int max_branches = 0;
};

struct ScanOptions {
  RootOptions roots;
  ClassifyOptions classify;
  double refine_tol = 1e-12;
  unsigned threads = 0;  // 0: hardware concurrency
};

ScanResult region_scan(const ContinuousCombination& c, const ScanGrid& grid, const ScanOptions& opt = {});

/// Critical points of lambda -> g(lambda, p) inside (-1, 1) (zeros of dg/dlambda).
std::vector<double> lambda_critical_points(const ContinuousCombination& c, const Vec& p, const RootOptions& opt = {});

}  // namespace nlslide
