#include "nlslide/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nlslide/errors.hpp"

namespace nlslide {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Splits on commas outside quotes and parentheses; strips one level of quotes.
std::vector<std::string> split_list(const std::string& text, std::string* problem) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  char quote = 0;
  bool quoted = false;
  auto flush = [&] {
    std::string item = quoted ? cur : trim(cur);
    if (!quoted && item.empty()) *problem = "empty list item";
    out.push_back(item);
    cur.clear();
    quoted = false;
  };
  for (char ch : text) {
    if (quote) {
      if (ch == quote) {
        quote = 0;
      } else {
        cur += ch;
      }
      continue;
    }
    if (ch == '"' || ch == '\'') {
      if (!trim(cur).empty()) *problem = "text before a quoted string";
      cur.clear();
      quote = ch;
      quoted = true;
    } else if (ch == '(') {
      ++depth;
      cur += ch;
    } else if (ch == ')') {
      --depth;
      cur += ch;
    } else if (ch == ',' && depth == 0) {
      flush();
    } else if (quoted) {
      if (ch != ' ' && ch != '\t') *problem = "text after a quoted string";
    } else {
      cur += ch;
    }
  }
  if (quote) *problem = "unterminated quote";
  if (!trim(cur).empty() || quoted || !out.empty()) flush();
  return out;
}

// Strips a trailing comment that starts outside quotes.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quote) {
      if (ch == quote) quote = 0;
    } else if (ch == '"' || ch == '\'') {
      quote = ch;
    } else if (ch == '#' || ch == ';') {
      return line.substr(0, i);
    }
  }
  return line;
}

bool to_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  *out = v;
  return true;
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Sections = std::map<std::string, std::map<std::string, Entry>>;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k = {
      {"system", {"variables", "h", "plus", "minus", "correction", "components"}},
      {"transition", {"kind", "phi"}},
      {"scan", {"lo", "hi", "step"}},
      {"slow", {"lo", "hi", "step"}},
      {"integrate", {"p0", "T", "eps", "branch", "rtol", "atol", "max_step", "max_events", "output_dt"}},
      {"portrait", {"count", "offset", "T", "mode"}},
      {"output", {"dir"}},
  };
  return k;
}

class Validator {
 public:
  explicit Validator(Sections s) : s_(std::move(s)) {}

  void problem(const std::string& msg) { problems_.push_back(msg); }
  const std::vector<std::string>& problems() const { return problems_; }

  const Entry* get(const std::string& sec, const std::string& key) {
    auto si = s_.find(sec);
    if (si == s_.end()) return nullptr;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return nullptr;
    ki->second.used = true;
    return &ki->second;
  }

  std::string where(const std::string& sec, const std::string& key, const Entry& e) const {
    return "[" + sec + "] " + key + " (line " + std::to_string(e.line) + ")";
  }

  std::optional<std::vector<std::string>> list(const std::string& sec, const std::string& key, bool required) {
    const Entry* e = get(sec, key);
    if (!e) {
      if (required) problem("[" + sec + "] " + key + ": missing");
      return std::nullopt;
    }
    std::string why;
    auto items = split_list(e->value, &why);
    if (!why.empty()) {
      problem(where(sec, key, *e) + ": " + why);
      return std::nullopt;
    }
    return items;
  }

  std::optional<std::string> scalar(const std::string& sec, const std::string& key, bool required) {
    auto items = list(sec, key, required);
    if (!items) return std::nullopt;
    if (items->size() != 1) {
      problem(where(sec, key, *get(sec, key)) + ": expected a single value");
      return std::nullopt;
    }
    return items->front();
  }

  std::optional<double> number(const std::string& sec, const std::string& key, bool required) {
    auto v = scalar(sec, key, required);
    if (!v) return std::nullopt;
    double d = 0;
    if (!to_number(*v, &d)) {
      problem(where(sec, key, *get(sec, key)) + ": not a number: '" + *v + "'");
      return std::nullopt;
    }
    return d;
  }

  std::optional<Vec> vector(const std::string& sec, const std::string& key, bool required, int size) {
    auto items = list(sec, key, required);
    if (!items) return std::nullopt;
    Vec out(static_cast<Eigen::Index>(items->size()));
    bool ok = true;
    for (std::size_t i = 0; i < items->size(); ++i) {
      double d = 0;
      if (!to_number((*items)[i], &d)) {
        problem(where(sec, key, *get(sec, key)) + ": not a number: '" + (*items)[i] + "'");
        ok = false;
      }
      out[static_cast<Eigen::Index>(i)] = d;
    }
    if (ok && size >= 0 && out.size() != size) {
      problem(where(sec, key, *get(sec, key)) + ": expected " + std::to_string(size) + " values, got " +
              std::to_string(out.size()));
      ok = false;
    }
    return ok ? std::optional<Vec>(out) : std::nullopt;
  }

  std::optional<std::vector<Expression>> expressions(const std::string& sec, const std::string& key, bool required,
                                                     const std::set<std::string>& allowed) {
    auto items = list(sec, key, required);
    if (!items) return std::nullopt;
    std::vector<Expression> out;
    bool ok = true;
    for (std::size_t i = 0; i < items->size(); ++i) {
      const std::string label = where(sec, key, *get(sec, key)) + " item " + std::to_string(i + 1);
      try {
        Expression e = parse((*items)[i]);
        for (const auto& v : e.variables()) {
          if (!allowed.count(v)) {
            problem(label + ": unbound variable '" + v + "'");
            ok = false;
          }
        }
        out.push_back(std::move(e));
      } catch (const Error& err) {
        problem(label + ": " + err.category() + ": " + err.what());
        ok = false;
      }
    }
    return ok ? std::optional<std::vector<Expression>>(std::move(out)) : std::nullopt;
  }

  void report_unused() {
    for (auto& [sec, keys] : s_) {
      for (auto& [key, e] : keys) {
        if (!e.used) problem(where(sec, key, e) + ": unknown key");
      }
    }
  }

  bool has_section(const std::string& sec) const { return s_.count(sec) > 0; }

 private:
  Sections s_;
  std::vector<std::string> problems_;
};

std::optional<ScanGrid> grid(Validator& v, const std::string& sec, int m, bool required) {
  if (!v.has_section(sec)) {
    if (required) v.problem("[" + sec + "]: missing section");
    return std::nullopt;
  }
  auto lo = v.vector(sec, "lo", true, m);
  auto hi = v.vector(sec, "hi", true, m);
  auto step = v.number(sec, "step", true);
  if (!lo || !hi || !step) return std::nullopt;
  if (!(*step > 0)) {
    v.problem("[" + sec + "] step: must be positive");
    return std::nullopt;
  }
  for (int i = 0; i < m; ++i) {
    if (!((*hi)[i] > (*lo)[i])) {
      v.problem("[" + sec + "]: hi must exceed lo on every axis");
      return std::nullopt;
    }
  }
  double count = 1;
  for (int i = 0; i < m; ++i) count *= std::floor(((*hi)[i] - (*lo)[i]) / *step) + 1;
  if (count > 5e7) {
    v.problem("[" + sec + "]: grid has more than 5e7 points");
    return std::nullopt;
  }
  return ScanGrid::with_step(*lo, *hi, *step);
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
  std::string why;
  const auto items = split_list(text, &why);
  if (!why.empty()) throw ConfigError("malformed list '" + text + "': " + why);
  std::vector<double> out;
  for (const auto& it : items) {
    double d = 0;
    if (!to_number(it, &d)) throw ConfigError("not a number: '" + it + "'");
    out.push_back(d);
  }
  return out;
}

RunConfig parse_config(const std::string& text, const std::string& path) {
  std::vector<std::string> problems;
  Sections sections;
  {
    std::istringstream in(text);
    std::string raw, current;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      const std::string at = "line " + std::to_string(line_no) + ": ";
      if (line.front() == '[') {
        if (line.back() != ']') {
          problems.push_back(at + "malformed section header");
          continue;
        }
        current = trim(line.substr(1, line.size() - 2));
        if (!known_keys().count(current)) problems.push_back(at + "unknown section [" + current + "]");
        sections[current];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        problems.push_back(at + "expected key = value");
        continue;
      }
      if (current.empty()) {
        problems.push_back(at + "key outside any section");
        continue;
      }
      const std::string key = trim(line.substr(0, eq));
      if (sections[current].count(key)) {
        problems.push_back(at + "duplicate key '" + key + "'");
        continue;
      }
      sections[current][key] = Entry{trim(line.substr(eq + 1)), line_no, false};
    }
  }
  // unknown sections were already reported; drop them so their keys are not
  for (auto it = sections.begin(); it != sections.end();) {
    it = known_keys().count(it->first) ? std::next(it) : sections.erase(it);
  }

  Validator v(std::move(sections));
  RunConfig cfg;
  cfg.path = path;
  cfg.hash = hex64(fnv1a64(text));

  // [system]
  std::vector<std::string> vars;
  if (auto names = v.list("system", "variables", true)) {
    std::set<std::string> seen;
    for (const auto& n : *names) {
      bool ok = !n.empty() && (std::isalpha(static_cast<unsigned char>(n[0])) || n[0] == '_');
      for (char ch : n) ok = ok && (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_');
      if (!ok) {
        v.problem("[system] variables: invalid name '" + n + "'");
      } else if (is_reserved_name(n)) {
        v.problem("[system] variables: '" + n + "' is reserved");
      } else if (!seen.insert(n).second) {
        v.problem("[system] variables: duplicate '" + n + "'");
      }
    }
    if (names->size() < 2) v.problem("[system] variables: need at least two");
    if (seen.size() == names->size() && names->size() >= 2) vars = *names;
  }
  const std::set<std::string> state(vars.begin(), vars.end());
  std::set<std::string> with_lambda = state;
  with_lambda.insert("lambda");
  const int n = static_cast<int>(vars.size());

  auto h = v.expressions("system", "h", true, state);
  auto plus = v.expressions("system", "plus", true, state);
  auto minus = v.expressions("system", "minus", true, state);
  const bool has_corr = v.get("system", "correction") != nullptr;
  const bool has_full = v.get("system", "components") != nullptr;
  if (has_corr && has_full) v.problem("[system]: give either correction or components, not both");
  auto extra = has_full ? v.expressions("system", "components", true, with_lambda)
                        : v.expressions("system", "correction", false, with_lambda);
  if (h && h->size() != 1) v.problem("[system] h: expected one expression");
  auto dim_ok = [&](const char* key, const std::optional<std::vector<Expression>>& e) {
    if (e && n > 0 && static_cast<int>(e->size()) != n) {
      v.problem(std::string("[system] ") + key + ": expected " + std::to_string(n) + " components, got " +
                std::to_string(e->size()));
      return false;
    }
    return e.has_value();
  };
  const bool plus_ok = dim_ok("plus", plus);
  const bool minus_ok = dim_ok("minus", minus);
  const bool extra_ok = !(has_corr || has_full) || dim_ok(has_full ? "components" : "correction", extra);
  if (n > 0 && h && h->size() == 1 && plus_ok && minus_ok && extra_ok) {
    try {
      PiecewiseSystem sys(vars, h->front(), *plus, *minus);
      if (has_full) {
        cfg.combination = ContinuousCombination::from_components(std::move(sys), *extra);
      } else if (has_corr) {
        cfg.combination = ContinuousCombination(std::move(sys), *extra);
      } else {
        cfg.combination = ContinuousCombination(std::move(sys));
      }
    } catch (const Error& e) {
      v.problem("[system]: " + e.category() + ": " + e.what());
    }
  }

  // [transition]
  if (auto kind = v.scalar("transition", "kind", false)) {
    auto phi = v.expressions("transition", "phi", *kind == "custom", {"s"});
    try {
      if (*kind == "tanh") {
        cfg.transition = TransitionFunction::tanh();
      } else if (*kind == "sharp") {
        cfg.transition = TransitionFunction::sharp();
      } else if (*kind == "custom") {
        if (phi && phi->size() == 1) cfg.transition = TransitionFunction::custom(phi->front(), "s");
      } else {
        v.problem("[transition] kind: expected tanh, sharp or custom");
      }
      if (*kind != "custom" && v.get("transition", "phi")) v.problem("[transition] phi: only used with kind = custom");
    } catch (const Error& e) {
      v.problem("[transition] phi: " + e.category() + ": " + e.what());
    }
  }

  // grids
  const int m = std::max(n - 1, 1);
  cfg.scan = grid(v, "scan", m, false);
  cfg.slow = v.has_section("slow") ? grid(v, "slow", m, false) : cfg.scan;

  // [integrate]
  cfg.p0 = v.vector("integrate", "p0", false, n > 0 ? n : -1);
  cfg.T = v.number("integrate", "T", false);
  if (cfg.T && *cfg.T == 0.0) v.problem("[integrate] T: must be nonzero");
  if (auto e = v.vector("integrate", "eps", false, -1)) {
    cfg.eps.assign(e->data(), e->data() + e->size());
    for (double x : cfg.eps) {
      if (!(x > 0)) v.problem("[integrate] eps: values must be positive");
    }
  }
  if (auto b = v.scalar("integrate", "branch", false)) {
    double k = 0;
    if (*b == "continuity") {
      cfg.policy = BranchPolicy::continuity();
    } else if (*b == "error") {
      cfg.policy = BranchPolicy::error();
    } else if (to_number(*b, &k) && k >= 0 && k == std::floor(k)) {
      cfg.policy = BranchPolicy::fixed(static_cast<int>(k));
    } else {
      v.problem("[integrate] branch: expected continuity, error or a branch index");
    }
  }
  auto& ic = cfg.integrator;
  if (auto x = v.number("integrate", "rtol", false)) ic.rtol = *x;
  if (auto x = v.number("integrate", "atol", false)) ic.atol = *x;
  if (auto x = v.number("integrate", "max_step", false)) ic.max_step = *x;
  if (auto x = v.number("integrate", "max_events", false)) ic.max_events = static_cast<int>(*x);
  if (auto x = v.number("integrate", "output_dt", false)) ic.output_dt = *x;
  try {
    ic.validate();
  } catch (const Error& e) {
    v.problem("[integrate]: " + std::string(e.what()));
  }

  // [portrait]
  if (auto x = v.number("portrait", "count", false)) {
    if (*x < 1 || *x != std::floor(*x) || *x > 100) v.problem("[portrait] count: expected an integer in 1..100");
    cfg.portrait.count = static_cast<int>(*x);
  }
  if (auto x = v.number("portrait", "offset", false)) {
    if (!(*x > 0)) v.problem("[portrait] offset: must be positive");
    cfg.portrait.offset = *x;
  }
  cfg.portrait.T = v.number("portrait", "T", false);
  if (auto x = v.scalar("portrait", "mode", false)) {
    if (*x != "filippov" && *x != "regularized") v.problem("[portrait] mode: expected filippov or regularized");
    cfg.portrait.mode = *x;
  }

  if (auto d = v.scalar("output", "dir", false)) cfg.output_dir = *d;

  v.report_unused();
  problems.insert(problems.end(), v.problems().begin(), v.problems().end());
  if (!problems.empty()) {
    std::string msg = path + ": " + std::to_string(problems.size()) + " problem" + (problems.size() > 1 ? "s" : "") + ": ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError("file not found: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace nlslide
