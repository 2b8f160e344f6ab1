#pragma once

// Sectioned run configuration:
//
//   [system]      variables, h, plus, minus, and correction or components
//   [transition]  kind = tanh | sharp | custom, phi (custom profile in s)
//   [scan]        lo, hi, step over the Sigma coordinates
//   [slow]        lo, hi, step for the slow-manifold grid (defaults to [scan])
//   [integrate]   p0, T, eps, branch, rtol, atol, max_step, max_events, output_dt
//   [portrait]    count, offset, T, mode
//   [output]      dir
//
// Expressions are quoted strings; lists are comma separated.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlslide/dynamics.hpp"
#include "nlslide/psvf.hpp"
#include "nlslide/sliding.hpp"

namespace nlslide {

inline constexpr const char* kVersion = "0.1.0";

struct PortraitConfig {
  int count = 5;            // starting points per side of Sigma
  double offset = 0.0;      // distance of the starts from Sigma; 0 picks a quarter of the box width
  std::optional<double> T;  // defaults to [integrate] T
  std::string mode = "filippov";
};

struct RunConfig {
  std::string path;
  std::string hash;  // FNV-1a 64 of the file bytes, hex

  std::optional<ContinuousCombination> combination;
  TransitionFunction transition = TransitionFunction::tanh();
  std::optional<ScanGrid> scan;
  std::optional<ScanGrid> slow;

  std::optional<Vec> p0;
  std::optional<double> T;
  std::vector<double> eps;
  BranchPolicy policy = BranchPolicy::continuity();
  IntegratorConfig integrator;

  PortraitConfig portrait;
  std::string output_dir = ".";

  const ContinuousCombination& system() const { return *combination; }
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Parses and validates; a ConfigError lists every problem found, separated by "; ".
RunConfig parse_config(const std::string& text, const std::string& path = "<string>");
/// ConfigError "file not found: <path>" when missing.
RunConfig load_config(const std::string& path);

/// "1, -2.5, 3" -> vector; ConfigError on malformed input.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace nlslide
