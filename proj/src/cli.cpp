#include "nlslide/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "nlslide/catalog.hpp"
#include "nlslide/config.hpp"
#include "nlslide/errors.hpp"
#include "nlslide/output.hpp"
#include "nlslide/slowfast.hpp"

namespace nlslide {

namespace {

std::string g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string vec_text(const Vec& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + g12(v[i] == 0.0 ? 0.0 : v[i]);
  return s + ")";
}

std::string out_path(const RunConfig& cfg, const std::string& override_dir, const std::string& name) {
  const std::string dir = override_dir.empty() ? cfg.output_dir : override_dir;
  return (std::filesystem::path(dir) / name).string();
}

void emit(std::ostream& out, const std::string& path, const std::string& content) {
  write_file_atomic(path, content);
  out << "wrote " << path << "\n";
}

const ScanGrid& need_scan(const RunConfig& cfg) {
  if (!cfg.scan) throw ConfigError(cfg.path + ": [scan] section required for this command");
  return *cfg.scan;
}

const ScanGrid& need_slow(const RunConfig& cfg) {
  if (!cfg.slow) throw ConfigError(cfg.path + ": [slow] or [scan] section required for this command");
  return *cfg.slow;
}

void need_run(const RunConfig& cfg) {
  if (!cfg.p0 || !cfg.T) throw ConfigError(cfg.path + ": [integrate] p0 and T required for this command");
}

BranchPolicy parse_policy(const std::string& text) {
  if (text == "continuity") return BranchPolicy::continuity();
  if (text == "error") return BranchPolicy::error();
  char* end = nullptr;
  const long k = std::strtol(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || k < 0) throw ConfigError("--branch expects continuity, error or an index");
  return BranchPolicy::fixed(static_cast<int>(k));
}

// --- commands ----------------------------------------------------------------

int cmd_classify(const RunConfig& cfg, const std::string& dir, std::ostream& out) {
  const auto scan = region_scan(cfg.system(), need_scan(cfg));
  int invalid = 0;
  for (const auto& p : scan.points) invalid += p.valid ? 0 : 1;
  out << scan.points.size() << " points, " << invalid << " invalid, at most " << scan.max_branches
      << " sliding branches\n";
  if (scan.grid.lo.size() == 1) {
    // constant-count runs along the axis
    std::size_t start = 0;
    auto count = [&](std::size_t i) { return scan.points[i].valid ? scan.points[i].nl.n_branches() : -1; };
    for (std::size_t i = 1; i <= scan.points.size(); ++i) {
      if (i == scan.points.size() || count(i) != count(start)) {
        out << "  x in [" << g12(scan.points[start].x[0]) << ", " << g12(scan.points[i - 1].x[0]) << "]: "
            << (count(start) < 0 ? std::string("invalid") : std::to_string(count(start)) + (count(start) == 1 ? " branch" : " branches")) << "\n";
        start = i;
      }
    }
  }
  for (const auto& b : scan.boundaries) {
    out << "boundary " << vec_text(b.x) << " " << to_string(b.kind) << " " << b.n_before << " -> " << b.n_after << "\n";
  }
  emit(out, out_path(cfg, dir, "scan.csv"), scan_csv(scan, cfg.hash));
  emit(out, out_path(cfg, dir, "boundaries.csv"), boundaries_csv(scan, cfg.hash));
  return 0;
}

int cmd_slide(const RunConfig& cfg, const std::string& at, int branch, std::ostream& out) {
  const auto& c = cfg.system();
  const auto coords = parse_number_list(at);
  if (static_cast<int>(coords.size()) != c.dim()) {
    throw ConfigError("--at expects " + std::to_string(c.dim()) + " coordinates");
  }
  const Vec p = Eigen::Map<const Vec>(coords.data(), static_cast<Eigen::Index>(coords.size()));
  const auto cls = classify(c.base(), p);
  const auto nl = nonlinear_classify(c, p);
  const auto branches = interior_roots(nl.roots);
  out << "point " << vec_text(p) << "\n";
  out << "classical: " << cls.label() << "\n";
  out << "nonlinear: " << nl.label() << ", " << branches.size() << " branch" << (branches.size() == 1 ? "" : "es")
      << "\n";
  for (const auto& r : nl.roots) {
    out << "root lambda = " << g12(r.lambda) << (r.transversal ? " transversal" : " non-transversal")
        << (r.endpoint ? " endpoint" : "") << "\n";
  }
  if (branch >= static_cast<int>(branches.size())) {
    throw AmbiguousBranch("no sliding branch " + std::to_string(branch) + " at this point (" +
                          std::to_string(branches.size()) + " available)");
  }
  for (std::size_t k = 0; k < branches.size(); ++k) {
    if (branch >= 0 && static_cast<int>(k) != branch) continue;
    out << "branch " << k << ": lambda = " << g12(branches[k].lambda)
        << " field = " << vec_text(sliding_field(c, p, static_cast<int>(k))) << "\n";
  }
  return 0;
}

std::vector<ReducedEquilibrium> all_equilibria(const SlowFastSystem& sf, const SlowManifold& sm) {
  std::vector<ReducedEquilibrium> out;
  for (const auto& br : sm.branches) {
    for (auto& e : reduced_equilibria(sf, br)) {
      const bool dup = std::any_of(out.begin(), out.end(), [&](const ReducedEquilibrium& q) {
        return (q.x - e.x).norm() < 1e-7 && std::abs(q.lambda - e.lambda) < 1e-7;
      });
      if (!dup) out.push_back(std::move(e));
    }
  }
  return out;
}

int cmd_slowfast(const RunConfig& cfg, const std::string& dir, std::ostream& out) {
  const auto sf = build_slow_fast(cfg.system(), cfg.transition);
  const auto sm = trace_slow_manifold(sf, need_slow(cfg));
  const auto eqs = all_equilibria(sf, sm);
  std::size_t nodes = 0, nonhyp = 0;
  for (const auto& br : sm.branches) {
    nodes += br.nodes.size();
    for (const auto& n : br.nodes) nonhyp += n.hyperbolic ? 0 : 1;
  }
  out << "transition " << cfg.transition.describe() << "\n";
  out << sm.branches.size() << " slow-manifold branches, " << nodes << " nodes, " << nonhyp << " non-hyperbolic\n";
  for (const auto& a : sm.asymptotes) {
    out << "asymptote theta0 = " << g12(a.theta0) << " (psi = " << g12(a.lambda0) << ") as x -> "
        << (a.side > 0 ? "+inf" : "-inf") << "\n";
  }
  for (const auto& e : eqs) {
    out << "equilibrium x = " << vec_text(e.x) << " theta = " << g12(e.theta) << " lambda = " << g12(e.lambda) << " "
        << to_string(e.type);
    for (const auto& ev : e.eigenvalues) out << " " << g12(ev.real()) << (ev.imag() != 0 ? "+" + g12(ev.imag()) + "i" : "");
    out << "\n";
  }
  emit(out, out_path(cfg, dir, "slow_manifold.csv"), slow_manifold_csv(sm, sf.slow_dim(), cfg.hash));
  emit(out, out_path(cfg, dir, "equilibria.csv"), equilibria_csv(eqs, sf.slow_dim(), cfg.hash));
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& mode, std::optional<double> eps, const std::string& branch,
                 const std::string& dir, std::ostream& out) {
  need_run(cfg);
  const BranchPolicy policy = branch.empty() ? cfg.policy : parse_policy(branch);
  Trajectory tr = [&] {
    if (mode == "filippov") return integrate_filippov(cfg.system(), *cfg.p0, *cfg.T, policy, cfg.integrator);
    if (!eps) {
      if (cfg.eps.empty()) throw ConfigError("regularized mode needs --eps or [integrate] eps");
      eps = cfg.eps.front();
    }
    if (!(*eps > 0)) throw ConfigError("--eps must be positive");
    return integrate_regularized(cfg.system(), cfg.transition, *eps, *cfg.p0, *cfg.T, cfg.integrator);
  }();
  out << "mode " << mode << (mode == "regularized" ? " eps " + g12(*eps) : "") << "\n";
  for (const auto& s : tr.segments()) {
    out << "segment [" << g12(s.t_start) << ", " << g12(s.t_end) << "] " << to_string(s.regime)
        << (s.branch >= 0 ? " branch " + std::to_string(s.branch) : "") << "\n";
  }
  for (const auto& e : tr.events()) out << "event t = " << g12(e.t) << " " << to_string(e.kind) << " at " << vec_text(e.state) << "\n";
  for (const auto& w : tr.warnings()) out << "warning: " << w << "\n";
  out << "final t = " << g12(tr.t_end()) << " state " << vec_text(tr.final_state())
      << (tr.stopped_early() ? " (stopped early)" : "") << "\n";
  emit(out, out_path(cfg, dir, "trajectory.csv"), trajectory_csv(tr, cfg.hash));
  emit(out, out_path(cfg, dir, "events.csv"), events_csv(tr, cfg.hash));
  return 0;
}

int cmd_converge(const RunConfig& cfg, const std::string& dir, std::ostream& out) {
  need_run(cfg);
  const auto res = convergence_check(cfg.system(), cfg.transition, *cfg.p0, *cfg.T, cfg.eps, cfg.policy, cfg.integrator);
  out << "eps                      sup error\n";
  for (const auto& r : res.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-24.6g %s\n", r.eps, r.failed ? ("failed: " + r.message).c_str() : g12(r.error).c_str());
    out << line;
  }
  out << "fitted slope " << (res.slope_valid ? g12(res.slope) : std::string("n/a")) << "\n";
  emit(out, out_path(cfg, dir, "convergence.csv"), convergence_csv(res, cfg.hash));
  return 0;
}

int cmd_portrait(const RunConfig& cfg, const std::string& dir, std::ostream& out, std::ostream& err) {
  const auto& c = cfg.system();
  if (c.dim() != 2) throw ModelError("portrait needs a planar system");
  PortraitData data;
  data.scan = region_scan(c, need_scan(cfg));
  data.title = std::filesystem::path(cfg.path).filename().string();
  try {
    const auto sf = build_slow_fast(c, cfg.transition);
    data.manifold = trace_slow_manifold(sf, need_slow(cfg));
  } catch (const CoordinateFormError& e) {
    err << "warning: slow manifold skipped: " << e.what() << "\n";
  }
  const double lo = data.scan.grid.lo[0], hi = data.scan.grid.hi[0];
  const double offset = cfg.portrait.offset > 0 ? cfg.portrait.offset : (hi - lo) / 4;
  data.y_half_height = 1.5 * offset;
  const double T = cfg.portrait.T.value_or(cfg.T.value_or(2.0));
  const int n = cfg.portrait.count;
  for (int side : {1, -1}) {
    for (int i = 0; i < n; ++i) {
      Vec p0(2);
      p0 << lo + (hi - lo) * (i + 0.5) / n, side * offset;
      try {
        if (cfg.portrait.mode == "regularized") {
          const double eps = cfg.eps.empty() ? 1e-2 : cfg.eps.front();
          data.trajectories.push_back(integrate_regularized(c, cfg.transition, eps, p0, T, cfg.integrator));
        } else {
          data.trajectories.push_back(integrate_filippov(c, p0, T, cfg.policy, cfg.integrator));
        }
      } catch (const Error& e) {
        err << "warning: trajectory from " << vec_text(p0) << " skipped: " << e.category() << ": " << e.what() << "\n";
      }
    }
  }
  out << data.trajectories.size() << " trajectories, " << data.manifold.branches.size() << " slow-manifold branches\n";
  emit(out, out_path(cfg, dir, "portrait_scan.csv"), scan_csv(data.scan, cfg.hash));
  emit(out, out_path(cfg, dir, "portrait_slow_manifold.csv"), slow_manifold_csv(data.manifold, 1, cfg.hash));
  emit(out, out_path(cfg, dir, "portrait_trajectories.csv"), trajectories_csv(data.trajectories, cfg.hash));
  emit(out, out_path(cfg, dir, "portrait.svg"), portrait_svg(data));
  return 0;
}

int cmd_catalog_run(const std::string& which, bool json, std::ostream& out) {
  std::vector<FixtureReport> reports;
  if (which == "all") {
    for (const auto& id : fixture_ids()) reports.push_back(run_fixture(id));
  } else {
    reports.push_back(run_fixture(which));
  }
  bool pass = true;
  for (const auto& r : reports) pass = pass && r.pass;
  if (json) {
    out << reports_json(reports) << "\n";
  } else {
    for (const auto& r : reports) out << report_text(r);
    if (reports.size() > 1) {
      int failed = 0;
      for (const auto& r : reports) failed += r.pass ? 0 : 1;
      out << reports.size() - failed << "/" << reports.size() << " fixtures pass\n";
    }
  }
  return pass ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonlinear regularization of piecewise-smooth vector fields", "nlslide"};
  app.set_version_flag("--version", std::string("nlslide ") + kVersion);
  app.require_subcommand(1);

  std::string config, dir, at, mode = "filippov", branch_text, which;
  int branch = -1;
  std::optional<double> eps;
  bool json = false;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("config", config, "system configuration file")->required();
    sub->add_option("--out", dir, "output directory (overrides [output] dir)");
  };
  auto* classify_cmd = app.add_subcommand("classify", "classify Sigma and write the region scan");
  with_config(classify_cmd);
  auto* slide_cmd = app.add_subcommand("slide", "roots and sliding vector fields at a point of Sigma");
  slide_cmd->add_option("config", config, "system configuration file")->required();
  slide_cmd->add_option("--at", at, "point on Sigma, comma separated")->required();
  slide_cmd->add_option("--branch", branch, "only this branch")->check(CLI::NonNegativeNumber);
  auto* slowfast_cmd = app.add_subcommand("slowfast", "slow manifold, hyperbolicity and reduced equilibria");
  with_config(slowfast_cmd);
  auto* simulate_cmd = app.add_subcommand("simulate", "integrate a trajectory");
  with_config(simulate_cmd);
  simulate_cmd->add_option("--mode", mode, "regularized or filippov")->check(CLI::IsMember({"regularized", "filippov"}));
  simulate_cmd->add_option("--eps", eps, "regularization parameter");
  simulate_cmd->add_option("--branch", branch_text, "branch policy: continuity, error or an index");
  auto* converge_cmd = app.add_subcommand("converge", "sup error of regularized runs against the hybrid reference");
  with_config(converge_cmd);
  auto* portrait_cmd = app.add_subcommand("portrait", "phase portrait CSV bundle and SVG");
  with_config(portrait_cmd);
  auto* catalog_cmd = app.add_subcommand("catalog", "built-in fixtures with analytic oracles");
  catalog_cmd->require_subcommand(1);
  auto* list_cmd = catalog_cmd->add_subcommand("list", "list fixture ids");
  auto* run_cmd = catalog_cmd->add_subcommand("run", "run one fixture or all");
  run_cmd->add_option("id", which, "fixture id or all")->required();
  run_cmd->add_flag("--json", json, "machine-readable report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*catalog_cmd) {
      if (*list_cmd) {
        for (const auto& id : fixture_ids()) {
          char line[256];
          std::snprintf(line, sizeof line, "%-16s %s\n", id.c_str(), fixture(id).title.c_str());
          out << line;
        }
        return 0;
      }
      return cmd_catalog_run(which, json, out);
    }
    const RunConfig cfg = load_config(config);
    if (*classify_cmd) return cmd_classify(cfg, dir, out);
    if (*slide_cmd) return cmd_slide(cfg, at, branch, out);
    if (*slowfast_cmd) return cmd_slowfast(cfg, dir, out);
    if (*simulate_cmd) return cmd_simulate(cfg, mode, eps, branch_text, dir, out);
    if (*converge_cmd) return cmd_converge(cfg, dir, out);
    if (*portrait_cmd) return cmd_portrait(cfg, dir, out, err);
  } catch (const Error& e) {
    err << e.category() << ": " << e.what() << "\n";
    return e.category() == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace nlslide
