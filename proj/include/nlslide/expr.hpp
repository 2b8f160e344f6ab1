#pragma once

// Scalar formula engine: parse infix text, evaluate, differentiate.
//
// Grammar (standard precedence, ^ binds tighter than unary minus and is
// right-associative):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'pi' | identifier | identifier '(' expr ')' | '(' expr ')'
//
// Functions: sin cos tan cot tanh atanh sqrt abs sign exp log, plus the two
// strict helpers emitted by differentiation: sign_nz (sign, undefined at 0)
// and zero_nz (0, undefined at 0).

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nlslide {

using Environment = std::map<std::string, double, std::less<>>;

enum class Func : std::uint8_t {
  Sin, Cos, Tan, Cot, Tanh, Atanh, Sqrt, Abs, Sign, Exp, Log, SignNz, ZeroNz
};

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Pow };

std::string_view function_name(Func f);
bool is_function_name(std::string_view name);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind : std::uint8_t { Number, Variable, Negate, Binary, Call };

  Kind kind = Kind::Number;
  double value = 0.0;       // Number
  std::string name;         // Variable
  BinaryOp op{};            // Binary
  Func func{};              // Call
  NodePtr lhs;              // Negate / Binary / Call operand
  NodePtr rhs;              // Binary
};

/// Immutable expression tree; cheap to copy (shared structure).
class Expression {
 public:
  Expression();  // the constant 0

  static Expression number(double v);
  static Expression variable(std::string name);
  static Expression call(Func f, const Expression& arg);
  static Expression binary(BinaryOp op, const Expression& a, const Expression& b);
  static Expression negate(const Expression& a);
  /// Wraps an existing tree verbatim (no simplification).
  static Expression from_node(NodePtr root) { return Expression(std::move(root)); }

  const Node& node() const { return *root_; }
  const NodePtr& root() const { return root_; }

  bool is_number() const { return root_->kind == Node::Kind::Number; }
  bool is_number(double v) const { return is_number() && root_->value == v; }
  bool is_variable(std::string_view name) const {
    return root_->kind == Node::Kind::Variable && root_->name == name;
  }

  double evaluate(const Environment& env) const;
  std::set<std::string> variables() const;
  bool depends_on(std::string_view name) const;
  std::string to_string() const;

 private:
  explicit Expression(NodePtr root) : root_(std::move(root)) {}
  NodePtr root_;
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& base, const Expression& exponent);

Expression parse(std::string_view text);
Expression differentiate(const Expression& e, std::string_view var);
Expression substitute(const Expression& e, std::string_view var, const Expression& replacement);

/// Flattened postfix form with variables resolved to slots; the fast path
/// for the inner loops (root scans, integration).
class CompiledExpression {
 public:
  CompiledExpression() = default;
  /// Throws UnboundVariable if `e` references a name absent from `slots`.
  CompiledExpression(const Expression& e, std::span<const std::string> slots);

  double operator()(std::span<const double> values) const;

 private:
  enum class Op : std::uint8_t { Const, Load, Neg, Add, Sub, Mul, Div, Pow, Call };
  struct Instr {
    Op op;
    Func func;
    std::uint32_t index;
  };

  void emit(const Node& n, std::span<const std::string> slots, int depth);

  std::vector<Instr> code_;
  std::vector<double> constants_;
  int max_depth_ = 0;
};

}  // namespace nlslide
