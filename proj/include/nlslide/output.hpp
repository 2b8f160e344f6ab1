#pragma once

// CSV and SVG artifacts. Every CSV starts with a comment line
// "# nlslide <version> config-hash <hash>" followed by the header row;
// numbers use 17 significant digits so identical runs are byte-identical.

#include <string>
#include <vector>

#include "nlslide/dynamics.hpp"
#include "nlslide/slowfast.hpp"
#include "nlslide/sliding.hpp"

namespace nlslide {

std::string csv_number(double v);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::string scan_csv(const ScanResult& scan, const std::string& hash);
std::string boundaries_csv(const ScanResult& scan, const std::string& hash);
std::string slow_manifold_csv(const SlowManifold& sm, int slow_dim, const std::string& hash);
std::string equilibria_csv(const std::vector<ReducedEquilibrium>& eqs, int slow_dim, const std::string& hash);
/// Columns t, x1..xn, regime, branch; `run` adds a leading trajectory index when >= 0.
std::string trajectory_csv(const Trajectory& tr, const std::string& hash);
std::string trajectories_csv(const std::vector<Trajectory>& trs, const std::string& hash);
std::string events_csv(const Trajectory& tr, const std::string& hash);
std::string convergence_csv(const ConvergenceResult& res, const std::string& hash);

struct PortraitData {
  ScanResult scan;                 // 1-D scan over Sigma = {y = 0}
  SlowManifold manifold;           // blow-up strip theta in (0, pi)
  std::vector<Trajectory> trajectories;
  double y_half_height = 1.0;      // plane panel shows y in [-H, H]
  std::string title;
};

/// Two panels: the (x, y) plane with Sigma colored by class and the trajectories,
/// and the (theta, x) strip with the slow manifold.
std::string portrait_svg(const PortraitData& data);

}  // namespace nlslide
