#pragma once

// Piecewise-smooth vector fields, transition functions, continuous
// combinations and their regularizations.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlslide/expr.hpp"

namespace nlslide {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Names with a fixed meaning in the analysis; user systems may not use them.
bool is_reserved_name(std::string_view name);

/// Monotone profile phi: R -> [-1, 1].
///
/// Sharp profiles equal +-1 outside [-1, 1]; asymptotic ones only approach
/// the limits. psi(theta) = phi(cot theta) is the profile carried to the
/// blow-up angle, decreasing from psi(0) = 1 to psi(pi) = -1.
class TransitionFunction {
 public:
  enum class Kind { Sharp, Tanh, Custom };

  /// phi(s) = s (3 - s^2) / 2 on [-1, 1], clamped outside.
  static TransitionFunction sharp();
  static TransitionFunction tanh();
  /// User profile in the single variable `var`. If phi(+-1) = +-1 it is
  /// treated as sharp (clamped outside [-1, 1]); otherwise it must stay in
  /// (-1, 1) and is used as is. Monotonicity is checked on a 1000-point grid.
  static TransitionFunction custom(const Expression& phi, const std::string& var = "s");

  Kind kind() const { return kind_; }
  bool is_sharp() const { return sharp_; }
  std::string describe() const;

  double phi(double s) const;
  double dphi(double s) const;

  double psi(double theta) const;
  double dpsi(double theta) const;
  /// theta in (0, pi) with psi(theta) = lambda; DomainError if |lambda| >= 1.
  double psi_inverse(double lambda) const;

  /// Symbolic phi(arg); DomainError for the sharp kind (piecewise).
  Expression symbolic(const Expression& arg) const;

 private:
  TransitionFunction(Kind kind, bool sharp) : kind_(kind), sharp_(sharp) {}

  Kind kind_;
  bool sharp_;
  Expression expr_;
  std::string var_;
  CompiledExpression f_;
  CompiledExpression df_;
};

/// X = X+ where h > 0, X- where h < 0.
class PiecewiseSystem {
 public:
  PiecewiseSystem(std::vector<std::string> variables, Expression h, std::vector<Expression> xplus,
                  std::vector<Expression> xminus);

  int dim() const { return static_cast<int>(vars_.size()); }
  const std::vector<std::string>& variables() const { return vars_; }
  const Expression& h() const { return h_; }
  const std::vector<Expression>& xplus() const { return xplus_; }
  const std::vector<Expression>& xminus() const { return xminus_; }
  /// True when h is literally the last variable, the form the blow-up needs.
  bool h_is_last_coordinate() const { return h_.is_variable(vars_.back()); }

  double h_value(const Vec& p) const;
  Vec grad_h(const Vec& p) const;
  Vec plus(const Vec& p) const;
  Vec minus(const Vec& p) const;
  /// Lie derivatives X+- . grad h.
  double plus_lie(const Vec& p) const;
  double minus_lie(const Vec& p) const;

  Environment environment(const Vec& p) const;

 private:
  std::vector<std::string> vars_;
  Expression h_;
  std::vector<Expression> xplus_, xminus_;
  CompiledExpression h_c_;
  std::vector<CompiledExpression> grad_c_, plus_c_, minus_c_;
};

/// X~(lambda, p) = (1+lambda)/2 X+(p) + (1-lambda)/2 X-(p) + correction(lambda, p).
///
/// Construction validates that the correction vanishes at lambda = +-1
/// (checked at 100 seeded random points of [-2, 2]^n, tolerance 1e-10).
class ContinuousCombination {
 public:
  explicit ContinuousCombination(PiecewiseSystem base);
  ContinuousCombination(PiecewiseSystem base, std::vector<Expression> correction);
  /// Builds from the full components s_i(lambda, p); correction = full - convex part.
  static ContinuousCombination from_components(PiecewiseSystem base, std::vector<Expression> full);

  const PiecewiseSystem& base() const { return base_; }
  int dim() const { return base_.dim(); }
  const std::vector<Expression>& correction() const { return correction_; }
  const std::vector<Expression>& components() const { return components_; }
  bool zero_correction() const { return zero_; }

  Vec eval(double lambda, const Vec& p) const;
  Vec d_lambda(double lambda, const Vec& p) const;
  Mat jacobian_x(double lambda, const Vec& p) const;

  /// g(lambda, p) = grad h . X~ and its derivatives.
  const Expression& g_expression() const { return g_; }
  double g(double lambda, const Vec& p) const;
  double dg_dlambda(double lambda, const Vec& p) const;
  double d2g_dlambda2(double lambda, const Vec& p) const;
  Vec dg_dx(double lambda, const Vec& p) const;

 private:
  ContinuousCombination(PiecewiseSystem base, std::vector<Expression> full, std::vector<Expression> correction,
                        bool zero);
  void compile();
  void check_endpoints() const;
  std::vector<double> slots(double lambda, const Vec& p) const;

  PiecewiseSystem base_;
  std::vector<Expression> components_;
  std::vector<Expression> correction_;
  bool zero_;
  Expression g_;
  std::vector<CompiledExpression> s_c_, ds_c_;
  std::vector<std::vector<CompiledExpression>> jac_c_;
  CompiledExpression g_c_, dg_c_, d2g_c_;
  std::vector<CompiledExpression> dgx_c_;
};

/// Smooth field p -> X^eps(p) with its Jacobian.
struct SmoothField {
  int dim = 0;
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;  // may be empty
};

/// (1/2 + phi(h/eps)/2) X+ + (1/2 - phi(h/eps)/2) X-.
SmoothField st_regularization(const PiecewiseSystem& sys, const TransitionFunction& phi, double eps);
/// X~(phi(h/eps), p).
SmoothField nonlinear_regularization(const ContinuousCombination& c, const TransitionFunction& phi, double eps);

}  // namespace nlslide
