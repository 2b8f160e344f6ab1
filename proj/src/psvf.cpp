#include "nlslide/psvf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nlslide/errors.hpp"

namespace nlslide {

namespace {

constexpr double kPi = std::numbers::pi;

bool valid_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; });
}

std::vector<CompiledExpression> compile_all(const std::vector<Expression>& es,
                                            std::span<const std::string> slots, const char* what) {
  std::vector<CompiledExpression> out;
  out.reserve(es.size());
  for (const auto& e : es) {
    try {
      out.emplace_back(e, slots);
    } catch (const UnboundVariable& u) {
      throw ModelError(std::string(what) + " uses undeclared variable '" + u.name() + "'");
    }
  }
  return out;
}

double sharp_phi(double s) {
  if (s >= 1.0) return 1.0;
  if (s <= -1.0) return -1.0;
  return 0.5 * s * (3.0 - s * s);
}

}  // namespace

bool is_reserved_name(std::string_view name) {
  return name == "lambda" || name == "theta" || name == "r" || name == "eps" || name == "pi";
}

// --- TransitionFunction ----------------------------------------------------

TransitionFunction TransitionFunction::sharp() { return {Kind::Sharp, true}; }

TransitionFunction TransitionFunction::tanh() { return {Kind::Tanh, false}; }

TransitionFunction TransitionFunction::custom(const Expression& phi, const std::string& var) {
  for (const auto& v : phi.variables()) {
    if (v != var) throw ModelError("transition function may only use '" + var + "', found '" + v + "'");
  }
  TransitionFunction t(Kind::Custom, false);
  t.expr_ = phi;
  t.var_ = var;
  const std::vector<std::string> slot{var};
  t.f_ = CompiledExpression(phi, slot);
  t.df_ = CompiledExpression(differentiate(phi, var), slot);

  auto raw = [&](double s) {
    const double v[1] = {s};
    return t.f_(v);
  };
  t.sharp_ = std::abs(raw(1.0) - 1.0) < 1e-12 && std::abs(raw(-1.0) + 1.0) < 1e-12;
  const double span = t.sharp_ ? 1.0 : 10.0;
  double prev = raw(-span);
  for (int k = 1; k < 1000; ++k) {
    const double s = -span + 2.0 * span * k / 999.0;
    const double v = raw(s);
    if (!(v > prev)) {
      throw ModelError("transition function is not strictly increasing near s = " + std::to_string(s));
    }
    if (!t.sharp_ && std::abs(v) >= 1.0) {
      throw ModelError("asymptotic transition function must stay inside (-1, 1)");
    }
    prev = v;
  }
  return t;
}

std::string TransitionFunction::describe() const {
  switch (kind_) {
    case Kind::Sharp: return "sharp";
    case Kind::Tanh: return "tanh";
    case Kind::Custom: return "expr:" + expr_.to_string();
  }
  return {};
}

double TransitionFunction::phi(double s) const {
  switch (kind_) {
    case Kind::Sharp: return sharp_phi(s);
    case Kind::Tanh: return std::tanh(s);
    case Kind::Custom: {
      if (sharp_ && s >= 1.0) return 1.0;
      if (sharp_ && s <= -1.0) return -1.0;
      const double v[1] = {s};
      return f_(v);
    }
  }
  return 0.0;
}

double TransitionFunction::dphi(double s) const {
  switch (kind_) {
    case Kind::Sharp: return std::abs(s) >= 1.0 ? 0.0 : 1.5 * (1.0 - s * s);
    case Kind::Tanh: {
      const double t = std::tanh(s);
      return 1.0 - t * t;
    }
    case Kind::Custom: {
      if (sharp_ && std::abs(s) >= 1.0) return 0.0;
      const double v[1] = {s};
      return df_(v);
    }
  }
  return 0.0;
}

double TransitionFunction::psi(double theta) const {
  if (theta <= 0.0) return 1.0;
  if (theta >= kPi) return -1.0;
  return phi(std::cos(theta) / std::sin(theta));
}

double TransitionFunction::dpsi(double theta) const {
  if (theta <= 0.0 || theta >= kPi) return 0.0;
  const double s = std::sin(theta);
  const double d = dphi(std::cos(theta) / s);
  return d == 0.0 ? 0.0 : -d / (s * s);
}

double TransitionFunction::psi_inverse(double lambda) const {
  if (!(lambda > -1.0 && lambda < 1.0)) {
    throw DomainError("psi_inverse: lambda = " + std::to_string(lambda) + " outside (-1, 1)");
  }
  double s = 0.0;
  switch (kind_) {
    case Kind::Sharp: s = 2.0 * std::sin(std::asin(lambda) / 3.0); break;
    case Kind::Tanh: s = std::atanh(lambda); break;
    case Kind::Custom: {
      double lo = -1.0;
      double hi = 1.0;
      while (!sharp_ && phi(lo) > lambda) lo *= 2.0;
      while (!sharp_ && phi(hi) < lambda) hi *= 2.0;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (phi(mid) < lambda ? lo : hi) = mid;
      }
      s = 0.5 * (lo + hi);
      break;
    }
  }
  return std::atan2(1.0, s);  // arccot onto (0, pi)
}

Expression TransitionFunction::symbolic(const Expression& arg) const {
  switch (kind_) {
    case Kind::Tanh: return Expression::call(Func::Tanh, arg);
    case Kind::Custom:
      if (!sharp_) return substitute(expr_, var_, arg);
      break;
    case Kind::Sharp: break;
  }
  throw DomainError("sharp transition functions have no closed form (piecewise)");
}

// --- PiecewiseSystem -------------------------------------------------------

PiecewiseSystem::PiecewiseSystem(std::vector<std::string> variables, Expression h,
                                 std::vector<Expression> xplus, std::vector<Expression> xminus)
    : vars_(std::move(variables)), h_(std::move(h)), xplus_(std::move(xplus)), xminus_(std::move(xminus)) {
  if (vars_.size() < 2) throw ModelError("a piecewise system needs dimension >= 2");
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto& v = vars_[i];
    if (!valid_identifier(v) || is_function_name(v)) throw ModelError("invalid variable name '" + v + "'");
    if (is_reserved_name(v)) throw ModelError("variable name '" + v + "' is reserved");
    if (std::find(vars_.begin(), vars_.begin() + static_cast<long>(i), v) != vars_.begin() + static_cast<long>(i)) {
      throw ModelError("duplicate variable name '" + v + "'");
    }
  }
  if (xplus_.size() != vars_.size() || xminus_.size() != vars_.size()) {
    throw ModelError("X+ and X- need " + std::to_string(vars_.size()) + " components each");
  }
  h_c_ = compile_all({h_}, vars_, "h").front();
  std::vector<Expression> grad;
  for (const auto& v : vars_) grad.push_back(differentiate(h_, v));
  grad_c_ = compile_all(grad, vars_, "h");
  plus_c_ = compile_all(xplus_, vars_, "X+");
  minus_c_ = compile_all(xminus_, vars_, "X-");
}

double PiecewiseSystem::h_value(const Vec& p) const { return h_c_({p.data(), static_cast<std::size_t>(p.size())}); }

Vec PiecewiseSystem::grad_h(const Vec& p) const {
  Vec g(dim());
  for (int i = 0; i < dim(); ++i) g[i] = grad_c_[static_cast<std::size_t>(i)]({p.data(), static_cast<std::size_t>(p.size())});
  return g;
}

Vec PiecewiseSystem::plus(const Vec& p) const {
  Vec v(dim());
  for (int i = 0; i < dim(); ++i) v[i] = plus_c_[static_cast<std::size_t>(i)]({p.data(), static_cast<std::size_t>(p.size())});
  return v;
}

Vec PiecewiseSystem::minus(const Vec& p) const {
  Vec v(dim());
  for (int i = 0; i < dim(); ++i) v[i] = minus_c_[static_cast<std::size_t>(i)]({p.data(), static_cast<std::size_t>(p.size())});
  return v;
}

double PiecewiseSystem::plus_lie(const Vec& p) const { return grad_h(p).dot(plus(p)); }
double PiecewiseSystem::minus_lie(const Vec& p) const { return grad_h(p).dot(minus(p)); }

Environment PiecewiseSystem::environment(const Vec& p) const {
  Environment env;
  for (int i = 0; i < dim(); ++i) env[vars_[static_cast<std::size_t>(i)]] = p[i];
  return env;
}

// --- ContinuousCombination -------------------------------------------------

namespace {

std::vector<Expression> convex_part(const PiecewiseSystem& sys) {
  const Expression lam = Expression::variable("lambda");
  const Expression half = Expression::number(0.5);
  std::vector<Expression> out;
  for (int i = 0; i < sys.dim(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.push_back((half + half * lam) * sys.xplus()[k] + (half - half * lam) * sys.xminus()[k]);
  }
  return out;
}

}  // namespace

ContinuousCombination::ContinuousCombination(PiecewiseSystem base)
    : ContinuousCombination(base, convex_part(base), std::vector<Expression>(static_cast<std::size_t>(base.dim())), true) {}

ContinuousCombination::ContinuousCombination(PiecewiseSystem base, std::vector<Expression> correction)
    : base_(std::move(base)), correction_(std::move(correction)), zero_(false) {
  if (static_cast<int>(correction_.size()) != base_.dim()) {
    throw ModelError("correction needs " + std::to_string(base_.dim()) + " components");
  }
  zero_ = std::all_of(correction_.begin(), correction_.end(), [](const Expression& e) { return e.is_number(0.0); });
  components_ = convex_part(base_);
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (!correction_[i].is_number(0.0)) components_[i] = components_[i] + correction_[i];
  }
  compile();
  check_endpoints();
}

ContinuousCombination::ContinuousCombination(PiecewiseSystem base, std::vector<Expression> full,
                                             std::vector<Expression> correction, bool zero)
    : base_(std::move(base)), components_(std::move(full)), correction_(std::move(correction)), zero_(zero) {
  compile();
  check_endpoints();
}

ContinuousCombination ContinuousCombination::from_components(PiecewiseSystem base, std::vector<Expression> full) {
  if (static_cast<int>(full.size()) != base.dim()) {
    throw ModelError("combination needs " + std::to_string(base.dim()) + " components");
  }
  const auto convex = convex_part(base);
  std::vector<Expression> corr;
  for (std::size_t i = 0; i < full.size(); ++i) corr.push_back(full[i] - convex[i]);
  return {std::move(base), std::move(full), std::move(corr), false};
}

void ContinuousCombination::compile() {
  std::vector<std::string> slot_names{"lambda"};
  slot_names.insert(slot_names.end(), base_.variables().begin(), base_.variables().end());
  const auto& vars = base_.variables();

  s_c_ = compile_all(components_, slot_names, "combination");
  std::vector<Expression> ds;
  for (const auto& s : components_) ds.push_back(differentiate(s, "lambda"));
  ds_c_ = compile_all(ds, slot_names, "combination");
  jac_c_.clear();
  for (const auto& s : components_) {
    std::vector<Expression> row;
    for (const auto& v : vars) row.push_back(differentiate(s, v));
    jac_c_.push_back(compile_all(row, slot_names, "combination"));
  }

  Expression g = Expression::number(0.0);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Expression dh = differentiate(base_.h(), vars[i]);
    if (!dh.is_number(0.0)) g = g + dh * components_[i];
  }
  g_ = g;
  const Expression dg = differentiate(g_, "lambda");
  g_c_ = compile_all({g_}, slot_names, "combination").front();
  dg_c_ = compile_all({dg}, slot_names, "combination").front();
  d2g_c_ = compile_all({differentiate(dg, "lambda")}, slot_names, "combination").front();
  std::vector<Expression> dgx;
  for (const auto& v : vars) dgx.push_back(differentiate(g_, v));
  dgx_c_ = compile_all(dgx, slot_names, "combination");
}

void ContinuousCombination::check_endpoints() const {
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  int checked = 0;
  for (int k = 0; k < 100; ++k) {
    Vec p(dim());
    for (int i = 0; i < dim(); ++i) p[i] = coord(rng);
    try {
      const Vec xp = base_.plus(p);
      const Vec xm = base_.minus(p);
      const double ep = (eval(1.0, p) - xp).norm();
      const double em = (eval(-1.0, p) - xm).norm();
      if (ep > 1e-10 * std::max(1.0, xp.norm()) || em > 1e-10 * std::max(1.0, xm.norm())) {
        throw ModelError("combination does not reduce to X+ at lambda=1 and X- at lambda=-1 (mismatch " +
                         std::to_string(std::max(ep, em)) + ")");
      }
      ++checked;
    } catch (const DomainError&) {
      // points outside the fields' domain are skipped
    }
  }
  if (checked == 0) throw ModelError("endpoint identity could not be checked: no valid sample point");
}

std::vector<double> ContinuousCombination::slots(double lambda, const Vec& p) const {
  std::vector<double> v(static_cast<std::size_t>(p.size()) + 1);
  v[0] = lambda;
  for (int i = 0; i < p.size(); ++i) v[static_cast<std::size_t>(i) + 1] = p[i];
  return v;
}

Vec ContinuousCombination::eval(double lambda, const Vec& p) const {
  const auto v = slots(lambda, p);
  Vec out(dim());
  for (int i = 0; i < dim(); ++i) out[i] = s_c_[static_cast<std::size_t>(i)](v);
  return out;
}

Vec ContinuousCombination::d_lambda(double lambda, const Vec& p) const {
  const auto v = slots(lambda, p);
  Vec out(dim());
  for (int i = 0; i < dim(); ++i) out[i] = ds_c_[static_cast<std::size_t>(i)](v);
  return out;
}

Mat ContinuousCombination::jacobian_x(double lambda, const Vec& p) const {
  const auto v = slots(lambda, p);
  Mat J(dim(), dim());
  for (int i = 0; i < dim(); ++i) {
    for (int j = 0; j < dim(); ++j) J(i, j) = jac_c_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](v);
  }
  return J;
}

double ContinuousCombination::g(double lambda, const Vec& p) const { return g_c_(slots(lambda, p)); }
double ContinuousCombination::dg_dlambda(double lambda, const Vec& p) const { return dg_c_(slots(lambda, p)); }
double ContinuousCombination::d2g_dlambda2(double lambda, const Vec& p) const { return d2g_c_(slots(lambda, p)); }

Vec ContinuousCombination::dg_dx(double lambda, const Vec& p) const {
  const auto v = slots(lambda, p);
  Vec out(dim());
  for (int i = 0; i < dim(); ++i) out[i] = dgx_c_[static_cast<std::size_t>(i)](v);
  return out;
}

// --- regularizations -------------------------------------------------------

SmoothField st_regularization(const PiecewiseSystem& sys, const TransitionFunction& phi, double eps) {
  if (!(eps > 0.0)) throw ModelError("eps must be positive");
  auto lin = std::make_shared<ContinuousCombination>(sys);
  SmoothField f;
  f.dim = sys.dim();
  f.value = [sys, phi, eps](const Vec& p) {
    const double l = phi.phi(sys.h_value(p) / eps);
    return Vec((0.5 + 0.5 * l) * sys.plus(p) + (0.5 - 0.5 * l) * sys.minus(p));
  };
  f.jacobian = [lin, phi, eps](const Vec& p) {
    const double s = lin->base().h_value(p) / eps;
    const double l = phi.phi(s);
    return Mat(lin->jacobian_x(l, p) + lin->d_lambda(l, p) * (phi.dphi(s) / eps) * lin->base().grad_h(p).transpose());
  };
  return f;
}

SmoothField nonlinear_regularization(const ContinuousCombination& c, const TransitionFunction& phi, double eps) {
  if (!(eps > 0.0)) throw ModelError("eps must be positive");
  auto cc = std::make_shared<ContinuousCombination>(c);
  SmoothField f;
  f.dim = c.dim();
  f.value = [cc, phi, eps](const Vec& p) { return cc->eval(phi.phi(cc->base().h_value(p) / eps), p); };
  f.jacobian = [cc, phi, eps](const Vec& p) {
    const double s = cc->base().h_value(p) / eps;
    const double l = phi.phi(s);
    return Mat(cc->jacobian_x(l, p) + cc->d_lambda(l, p) * (phi.dphi(s) / eps) * cc->base().grad_h(p).transpose());
  };
  return f;
}

}  // namespace nlslide
