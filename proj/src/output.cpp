#include "nlslide/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "nlslide/config.hpp"
#include "nlslide/errors.hpp"

namespace nlslide {

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("io", "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("io", "cannot rename onto " + path + ": " + ec.message());
  }
}

namespace {

class Csv {
 public:
  Csv(const std::string& hash, const std::vector<std::string>& header) {
    os_ << "# nlslide " << kVersion << " config-hash " << hash << "\n";
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

std::vector<std::string> coord_names(const char* prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

void append_vec(std::vector<std::string>& cells, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) cells.push_back(csv_number(v[i]));
}

std::string class_label(const ScanPoint& p) { return p.valid ? p.cls.label() : "invalid"; }
std::string nl_label(const ScanPoint& p) { return p.valid ? p.nl.label() : "invalid"; }

}  // namespace

std::string scan_csv(const ScanResult& scan, const std::string& hash) {
  const int m = static_cast<int>(scan.grid.lo.size());
  auto header = coord_names("x", m);
  for (const char* c : {"class", "nl_class", "n_branches"}) header.push_back(c);
  for (int k = 0; k < scan.max_branches; ++k) header.push_back("lambda_" + std::to_string(k));
  Csv csv(hash, header);
  for (const auto& p : scan.points) {
    std::vector<std::string> cells;
    append_vec(cells, p.x);
    cells.push_back(class_label(p));
    cells.push_back(nl_label(p));
    const auto roots = p.valid ? interior_roots(p.nl.roots) : std::vector<LambdaRoot>{};
    cells.push_back(std::to_string(roots.size()));
    for (int k = 0; k < scan.max_branches; ++k) {
      cells.push_back(k < static_cast<int>(roots.size()) ? csv_number(roots[static_cast<std::size_t>(k)].lambda) : "");
    }
    csv.row(cells);
  }
  return csv.str();
}

std::string boundaries_csv(const ScanResult& scan, const std::string& hash) {
  const int m = static_cast<int>(scan.grid.lo.size());
  auto header = coord_names("x", m);
  for (const char* c : {"axis", "kind", "n_before", "n_after", "width"}) header.push_back(c);
  Csv csv(hash, header);
  for (const auto& b : scan.boundaries) {
    std::vector<std::string> cells;
    append_vec(cells, b.x);
    cells.push_back(std::to_string(b.axis + 1));
    cells.push_back(to_string(b.kind));
    cells.push_back(std::to_string(b.n_before));
    cells.push_back(std::to_string(b.n_after));
    cells.push_back(csv_number(b.width));
    csv.row(cells);
  }
  return csv.str();
}

std::string slow_manifold_csv(const SlowManifold& sm, int slow_dim, const std::string& hash) {
  std::vector<std::string> header{"theta", "lambda"};
  for (const auto& c : coord_names("x", slow_dim)) header.push_back(c);
  for (const char* c : {"hyperbolic", "dalpha_dtheta", "branch", "meets_tangency", "fold"}) header.push_back(c);
  Csv csv(hash, header);
  for (std::size_t b = 0; b < sm.branches.size(); ++b) {
    for (const auto& n : sm.branches[b].nodes) {
      std::vector<std::string> cells{csv_number(n.theta), csv_number(n.lambda)};
      append_vec(cells, n.x);
      cells.push_back(n.hyperbolic ? "1" : "0");
      cells.push_back(csv_number(n.dalpha_dtheta));
      cells.push_back(std::to_string(b));
      cells.push_back(n.meets_tangency ? "1" : "0");
      cells.push_back(n.fold ? "1" : "0");
      csv.row(cells);
    }
  }
  return csv.str();
}

std::string equilibria_csv(const std::vector<ReducedEquilibrium>& eqs, int slow_dim, const std::string& hash) {
  std::vector<std::string> header{"theta"};
  for (const auto& c : coord_names("x", slow_dim)) header.push_back(c);
  for (int k = 1; k <= slow_dim; ++k) {
    header.push_back("eig_real_" + std::to_string(k));
    header.push_back("eig_imag_" + std::to_string(k));
  }
  header.push_back("type");
  header.push_back("lambda");
  Csv csv(hash, header);
  for (const auto& e : eqs) {
    std::vector<std::string> cells{csv_number(e.theta)};
    append_vec(cells, e.x);
    for (int k = 0; k < slow_dim; ++k) {
      const bool have = k < static_cast<int>(e.eigenvalues.size());
      cells.push_back(have ? csv_number(e.eigenvalues[static_cast<std::size_t>(k)].real()) : "");
      cells.push_back(have ? csv_number(e.eigenvalues[static_cast<std::size_t>(k)].imag()) : "");
    }
    cells.push_back(to_string(e.type));
    cells.push_back(csv_number(e.lambda));
    csv.row(cells);
  }
  return csv.str();
}

namespace {

void trajectory_rows(Csv& csv, const Trajectory& tr, int run) {
  for (const auto& s : tr.samples()) {
    std::vector<std::string> cells;
    if (run >= 0) cells.push_back(std::to_string(run));
    cells.push_back(csv_number(s.t));
    append_vec(cells, s.state);
    const auto& seg = tr.segment_at(s.t);
    cells.push_back(to_string(seg.regime));
    cells.push_back(seg.branch >= 0 ? std::to_string(seg.branch) : "");
    csv.row(cells);
  }
}

std::vector<std::string> trajectory_header(int n, bool with_run) {
  std::vector<std::string> header;
  if (with_run) header.push_back("run");
  header.push_back("t");
  for (const auto& c : coord_names("x", n)) header.push_back(c);
  header.push_back("regime");
  header.push_back("branch");
  return header;
}

}  // namespace

std::string trajectory_csv(const Trajectory& tr, const std::string& hash) {
  Csv csv(hash, trajectory_header(tr.dim(), false));
  trajectory_rows(csv, tr, -1);
  return csv.str();
}

std::string trajectories_csv(const std::vector<Trajectory>& trs, const std::string& hash) {
  Csv csv(hash, trajectory_header(trs.empty() ? 2 : trs.front().dim(), true));
  for (std::size_t i = 0; i < trs.size(); ++i) trajectory_rows(csv, trs[i], static_cast<int>(i));
  return csv.str();
}

std::string events_csv(const Trajectory& tr, const std::string& hash) {
  std::vector<std::string> header{"t", "kind"};
  for (const auto& c : coord_names("x", tr.dim())) header.push_back(c);
  Csv csv(hash, header);
  for (const auto& e : tr.events()) {
    std::vector<std::string> cells{csv_number(e.t), to_string(e.kind)};
    append_vec(cells, e.state);
    csv.row(cells);
  }
  return csv.str();
}

std::string convergence_csv(const ConvergenceResult& res, const std::string& hash) {
  Csv csv(hash, {"eps", "error", "status"});
  for (const auto& r : res.rows) csv.row({csv_number(r.eps), r.failed ? "" : csv_number(r.error), r.failed ? "failed" : "ok"});
  return csv.str();
}

// --- SVG ---------------------------------------------------------------------

namespace {

constexpr double kW = 460, kH = 400, kMargin = 50, kGap = 60;

struct Axes {
  double ox, oy;  // top-left of the plotting area in pixels
  double x0, x1, y0, y1;
  double px(double x) const { return ox + (x - x0) / (x1 - x0) * kW; }
  double py(double y) const { return oy + (y1 - y) / (y1 - y0) * kH; }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void frame(std::ostringstream& os, const Axes& a, const std::string& xl, const std::string& yl) {
  os << "<rect x=\"" << num(a.ox) << "\" y=\"" << num(a.oy) << "\" width=\"" << num(kW) << "\" height=\"" << num(kH)
     << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = a.x0 + (a.x1 - a.x0) * i / 4, y = a.y0 + (a.y1 - a.y0) * i / 4;
    os << "<text x=\"" << num(a.px(x)) << "\" y=\"" << num(a.oy + kH + 16) << "\" text-anchor=\"middle\">" << label(x)
       << "</text>\n";
    os << "<text x=\"" << num(a.ox - 6) << "\" y=\"" << num(a.py(y) + 4) << "\" text-anchor=\"end\">" << label(y)
       << "</text>\n";
  }
  os << "<text x=\"" << num(a.ox + kW / 2) << "\" y=\"" << num(a.oy + kH + 34) << "\" text-anchor=\"middle\">" << xl
     << "</text>\n";
  os << "<text x=\"" << num(a.ox - 36) << "\" y=\"" << num(a.oy + kH / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
     << num(a.ox - 36) << " " << num(a.oy + kH / 2) << ")\">" << yl << "</text>\n";
}

void polyline(std::ostringstream& os, const std::vector<std::pair<double, double>>& pts, const char* color, double width,
              const char* dash = nullptr) {
  if (pts.size() < 2) return;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\"";
  if (dash) os << " stroke-dasharray=\"" << dash << "\"";
  os << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << num(pts[i].first) << "," << num(pts[i].second);
  os << "\"/>\n";
}

const char* class_color(const ScanPoint& p) {
  if (!p.valid) return "#bbbbbb";
  switch (p.cls.kind) {
    case PointKind::Sewing: return "#1f5fbf";
    case PointKind::Sliding: return "#d62728";
    case PointKind::Singular: break;
  }
  return "#222222";
}

}  // namespace

std::string portrait_svg(const PortraitData& d) {
  if (d.scan.grid.lo.size() != 1) throw ModelError("portrait needs a planar system");
  const double xlo = d.scan.grid.lo[0], xhi = d.scan.grid.hi[0];
  const Axes plane{kMargin, kMargin, xlo, xhi, -d.y_half_height, d.y_half_height};
  const Axes strip{kMargin + kW + kGap, kMargin, 0.0, std::numbers::pi, xlo, xhi};
  const double width = 2 * kW + kGap + 2 * kMargin, height = kH + 2 * kMargin + 60;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width) << "\" height=\"" << num(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  os << "<text x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(d.title)
     << "</text>\n";

  // clip regions keep trajectories inside their panel
  os << "<defs><clipPath id=\"plane\"><rect x=\"" << num(plane.ox) << "\" y=\"" << num(plane.oy) << "\" width=\""
     << num(kW) << "\" height=\"" << num(kH) << "\"/></clipPath><clipPath id=\"strip\"><rect x=\"" << num(strip.ox)
     << "\" y=\"" << num(strip.oy) << "\" width=\"" << num(kW) << "\" height=\"" << num(kH) << "\"/></clipPath></defs>\n";

  // Sigma band colored by classical class, with the nonlinear sliding set underneath
  os << "<g clip-path=\"url(#plane)\">\n";
  const auto& pts = d.scan.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double a = i == 0 ? xlo : 0.5 * (pts[i - 1].x[0] + pts[i].x[0]);
    const double b = i + 1 == pts.size() ? xhi : 0.5 * (pts[i].x[0] + pts[i + 1].x[0]);
    os << "<rect x=\"" << num(plane.px(a)) << "\" y=\"" << num(plane.py(0) - 4) << "\" width=\""
       << num(std::max(plane.px(b) - plane.px(a), 0.5)) << "\" height=\"5\" fill=\"" << class_color(pts[i]) << "\"/>\n";
    if (pts[i].valid && pts[i].nl.n_branches() > 0) {
      os << "<rect x=\"" << num(plane.px(a)) << "\" y=\"" << num(plane.py(0) + 2) << "\" width=\""
         << num(std::max(plane.px(b) - plane.px(a), 0.5)) << "\" height=\"3\" fill=\"#ff9f1c\"/>\n";
    }
  }
  for (const auto& tr : d.trajectories) {
    std::vector<std::pair<double, double>> line;
    for (const auto& s : tr.samples()) line.emplace_back(plane.px(s.state[0]), plane.py(s.state[1]));
    polyline(os, line, "#2a2a2a", 1.2);
    if (!line.empty()) {
      os << "<circle cx=\"" << num(line.front().first) << "\" cy=\"" << num(line.front().second)
         << "\" r=\"2.5\" fill=\"#2a2a2a\"/>\n";
    }
  }
  os << "</g>\n";
  frame(os, plane, "x", "y");

  // slow manifold on the blow-up strip; non-hyperbolic nodes dashed
  os << "<g clip-path=\"url(#strip)\">\n";
  for (const auto& br : d.manifold.branches) {
    std::vector<std::pair<double, double>> run;
    bool hyper = true;
    auto flush = [&] {
      polyline(os, run, hyper ? "#2ca02c" : "#9467bd", 2.0, hyper ? nullptr : "4,3");
      run.clear();
    };
    for (const auto& n : br.nodes) {
      if (!run.empty() && n.hyperbolic != hyper) {
        const auto last = run.back();
        flush();
        run.push_back(last);
      }
      hyper = n.hyperbolic;
      run.emplace_back(strip.px(n.theta), strip.py(n.x[0]));
    }
    flush();
  }
  os << "</g>\n";
  frame(os, strip, "theta", "x");

  // legend
  const double ly = kMargin + kH + 50;
  const std::pair<const char*, const char*> items[] = {{"#1f5fbf", "sewing"},
                                                       {"#d62728", "sliding"},
                                                       {"#222222", "tangency"},
                                                       {"#ff9f1c", "nonlinear sliding"},
                                                       {"#2ca02c", "slow manifold (hyperbolic)"},
                                                       {"#9467bd", "slow manifold (non-hyperbolic)"}};
  double lx = kMargin;
  for (const auto& [color, text] : items) {
    os << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 9) << "\" width=\"12\" height=\"10\" fill=\"" << color
       << "\"/>\n";
    os << "<text x=\"" << num(lx + 16) << "\" y=\"" << num(ly) << "\">" << text << "</text>\n";
    lx += 30 + 6.2 * static_cast<double>(std::string(text).size());
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace nlslide
