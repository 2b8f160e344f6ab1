#include "nlslide/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <utility>

#include "nlslide/errors.hpp"

namespace nlslide {

namespace {

struct FuncEntry {
  std::string_view name;
  Func func;
};

constexpr std::array<FuncEntry, 13> kFunctions{{
    {"sin", Func::Sin},       {"cos", Func::Cos},   {"tan", Func::Tan},
    {"cot", Func::Cot},       {"tanh", Func::Tanh}, {"atanh", Func::Atanh},
    {"sqrt", Func::Sqrt},     {"abs", Func::Abs},   {"sign", Func::Sign},
    {"exp", Func::Exp},       {"log", Func::Log},   {"sign_nz", Func::SignNz},
    {"zero_nz", Func::ZeroNz},
}};

double finite_or_throw(double v, std::string_view what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string(what) + ": result is not finite");
  }
  return v;
}

double apply_function(Func f, double x) {
  switch (f) {
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Tan: return finite_or_throw(std::tan(x), "tan");
    case Func::Cot: {
      const double s = std::sin(x);
      if (s == 0.0) throw DomainError("cot: argument is a multiple of pi");
      return finite_or_throw(std::cos(x) / s, "cot");
    }
    case Func::Tanh: return std::tanh(x);
    case Func::Atanh:
      if (!(x > -1.0 && x < 1.0)) {
        throw DomainError("atanh: argument " + std::to_string(x) + " outside (-1, 1)");
      }
      return std::atanh(x);
    case Func::Sqrt:
      if (x < 0.0) throw DomainError("sqrt: negative argument " + std::to_string(x));
      return std::sqrt(x);
    case Func::Abs: return std::abs(x);
    case Func::Sign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Func::Exp: return finite_or_throw(std::exp(x), "exp");
    case Func::Log:
      if (!(x > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(x));
      return std::log(x);
    case Func::SignNz:
      if (x == 0.0) throw DomainError("derivative of abs/sign evaluated at 0");
      return x > 0.0 ? 1.0 : -1.0;
    case Func::ZeroNz:
      if (x == 0.0) throw DomainError("derivative of sign evaluated at 0");
      return 0.0;
  }
  return 0.0;
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return finite_or_throw(a + b, "+");
    case BinaryOp::Sub: return finite_or_throw(a - b, "-");
    case BinaryOp::Mul: return finite_or_throw(a * b, "*");
    case BinaryOp::Div:
      if (b == 0.0) throw DomainError("division by zero");
      return finite_or_throw(a / b, "/");
    case BinaryOp::Pow: {
      if (a == 0.0 && b < 0.0) throw DomainError("^: zero raised to a negative power");
      if (a < 0.0 && std::trunc(b) != b) {
        throw DomainError("^: negative base with non-integer exponent");
      }
      return finite_or_throw(std::pow(a, b), "^");
    }
  }
  return 0.0;
}

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Number;
  n->value = v;
  return n;
}

NodePtr make_variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Variable;
  n->name = std::move(name);
  return n;
}

NodePtr make_negate(NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Negate;
  n->lhs = std::move(a);
  return n;
}

NodePtr make_binary(BinaryOp op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

NodePtr make_call(Func f, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Call;
  n->func = f;
  n->lhs = std::move(a);
  return n;
}

double eval_node(const Node& n, const Environment& env) {
  switch (n.kind) {
    case Node::Kind::Number: return n.value;
    case Node::Kind::Variable: {
      auto it = env.find(n.name);
      if (it == env.end()) throw UnboundVariable(n.name);
      return it->second;
    }
    case Node::Kind::Negate: return -eval_node(*n.lhs, env);
    case Node::Kind::Binary:
      return apply_binary(n.op, eval_node(*n.lhs, env), eval_node(*n.rhs, env));
    case Node::Kind::Call: return apply_function(n.func, eval_node(*n.lhs, env));
  }
  return 0.0;
}

void collect_variables(const Node& n, std::set<std::string>& out) {
  switch (n.kind) {
    case Node::Kind::Number: return;
    case Node::Kind::Variable: out.insert(n.name); return;
    case Node::Kind::Binary: collect_variables(*n.rhs, out); [[fallthrough]];
    case Node::Kind::Negate:
    case Node::Kind::Call: collect_variables(*n.lhs, out); return;
  }
}

bool node_depends_on(const Node& n, std::string_view name) {
  switch (n.kind) {
    case Node::Kind::Number: return false;
    case Node::Kind::Variable: return n.name == name;
    case Node::Kind::Binary:
      return node_depends_on(*n.lhs, name) || node_depends_on(*n.rhs, name);
    case Node::Kind::Negate:
    case Node::Kind::Call: return node_depends_on(*n.lhs, name);
  }
  return false;
}

// --- printing -------------------------------------------------------------

constexpr int kPrecAdd = 1;
constexpr int kPrecMul = 2;
constexpr int kPrecNeg = 3;
constexpr int kPrecPow = 4;
constexpr int kPrecAtom = 5;

int precedence(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Number:
    case Node::Kind::Variable:
    case Node::Kind::Call: return kPrecAtom;
    case Node::Kind::Negate: return kPrecNeg;
    case Node::Kind::Binary:
      switch (n.op) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return kPrecAdd;
        case BinaryOp::Mul:
        case BinaryOp::Div: return kPrecMul;
        case BinaryOp::Pow: return kPrecPow;
      }
  }
  return kPrecAtom;
}

void print_node(const Node& n, std::string& out);

void print_child(const Node& child, bool parens, std::string& out) {
  if (parens) out += '(';
  print_node(child, out);
  if (parens) out += ')';
}

void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::Number: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      if (n.value < 0.0 || std::signbit(n.value)) {
        out += '(';
        out += buf;
        out += ')';
      } else {
        out += buf;
      }
      return;
    }
    case Node::Kind::Variable: out += n.name; return;
    case Node::Kind::Negate: {
      out += '-';
      const bool parens =
          precedence(*n.lhs) < kPrecNeg || n.lhs->kind == Node::Kind::Negate;
      print_child(*n.lhs, parens, out);
      return;
    }
    case Node::Kind::Call:
      out += function_name(n.func);
      print_child(*n.lhs, true, out);
      return;
    case Node::Kind::Binary: {
      const int p = precedence(n);
      const int pl = precedence(*n.lhs);
      const int pr = precedence(*n.rhs);
      const bool left_parens = n.op == BinaryOp::Pow ? pl <= kPrecPow : pl < p;
      // left-associative ops keep an equal-precedence right operand grouped,
      // so reparsing reproduces the same tree (and the same rounding)
      const bool right_parens = n.op == BinaryOp::Pow
                                    ? pr < kPrecNeg || n.rhs->kind == Node::Kind::Negate
                                    : pr <= p || n.rhs->kind == Node::Kind::Negate;
      print_child(*n.lhs, left_parens, out);
      switch (n.op) {
        case BinaryOp::Add: out += " + "; break;
        case BinaryOp::Sub: out += " - "; break;
        case BinaryOp::Mul: out += '*'; break;
        case BinaryOp::Div: out += '/'; break;
        case BinaryOp::Pow: out += '^'; break;
      }
      print_child(*n.rhs, right_parens, out);
      return;
    }
  }
}

// --- parsing --------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse_all() {
    NodePtr e = parse_expr();
    skip_space();
    if (pos_ < text_.size()) {
      throw ParseError(pos_, std::string("unexpected character '") + text_[pos_] + "'");
    }
    return e;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    while (true) {
      if (accept('+')) {
        lhs = make_binary(BinaryOp::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = make_binary(BinaryOp::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    while (true) {
      if (accept('*')) {
        lhs = make_binary(BinaryOp::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = make_binary(BinaryOp::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return make_negate(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return make_binary(BinaryOp::Pow, base, parse_unary());
    return base;
  }

  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError(pos_, "unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_expr();
      if (!accept(')')) throw ParseError(pos_, "expected ')'");
      return e;
    }
    if (is_digit(c) || c == '.') return parse_number();
    if (is_ident_start(c)) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '(') {
        Func f{};
        bool found = false;
        for (const auto& entry : kFunctions) {
          if (entry.name == name) {
            f = entry.func;
            found = true;
          }
        }
        if (!found) throw ParseError(start, "unknown function '" + name + "'");
        ++pos_;
        NodePtr arg = parse_expr();
        if (!accept(')')) throw ParseError(pos_, "expected ')' after function argument");
        return make_call(f, arg);
      }
      if (name == "pi") return make_number(std::numbers::pi);
      return make_variable(std::move(name));
    }
    throw ParseError(pos_, std::string("expected operand, found '") + c + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && is_digit(text_[look])) {
        pos_ = look;
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ParseError(start, "malformed number");
    return make_number(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_function_name(std::string_view name) {
  return std::any_of(kFunctions.begin(), kFunctions.end(),
                     [&](const FuncEntry& e) { return e.name == name; });
}

std::string_view function_name(Func f) {
  for (const auto& entry : kFunctions) {
    if (entry.func == f) return entry.name;
  }
  return "?";
}

Expression::Expression() : root_(make_number(0.0)) {}

Expression Expression::number(double v) { return Expression(make_number(v)); }

Expression Expression::variable(std::string name) {
  return Expression(make_variable(std::move(name)));
}

Expression Expression::call(Func f, const Expression& arg) {
  if (arg.is_number()) {
    try {
      return number(apply_function(f, arg.node().value));
    } catch (const DomainError&) {
      // keep the call so evaluation raises the error where it belongs
    }
  }
  return Expression(make_call(f, arg.root_));
}

Expression Expression::negate(const Expression& a) {
  if (a.is_number()) return number(-a.node().value);
  if (a.node().kind == Node::Kind::Negate) return Expression(a.node().lhs);
  return Expression(make_negate(a.root_));
}

Expression Expression::binary(BinaryOp op, const Expression& a, const Expression& b) {
  if (a.is_number() && b.is_number()) {
    try {
      return number(apply_binary(op, a.node().value, b.node().value));
    } catch (const DomainError&) {
      return Expression(make_binary(op, a.root_, b.root_));
    }
  }
  switch (op) {
    case BinaryOp::Add:
      if (a.is_number(0.0)) return b;
      if (b.is_number(0.0)) return a;
      break;
    case BinaryOp::Sub:
      if (b.is_number(0.0)) return a;
      if (a.is_number(0.0)) return negate(b);
      break;
    case BinaryOp::Mul:
      if (a.is_number(0.0) || b.is_number(0.0)) return number(0.0);
      if (a.is_number(1.0)) return b;
      if (b.is_number(1.0)) return a;
      if (a.is_number(-1.0)) return negate(b);
      if (b.is_number(-1.0)) return negate(a);
      break;
    case BinaryOp::Div:
      if (b.is_number(1.0)) return a;
      if (a.is_number(0.0) && !b.is_number()) return number(0.0);
      break;
    case BinaryOp::Pow:
      if (b.is_number(0.0)) return number(1.0);
      if (b.is_number(1.0)) return a;
      break;
  }
  return Expression(make_binary(op, a.root_, b.root_));
}

Expression operator+(const Expression& a, const Expression& b) {
  return Expression::binary(BinaryOp::Add, a, b);
}
Expression operator-(const Expression& a, const Expression& b) {
  return Expression::binary(BinaryOp::Sub, a, b);
}
Expression operator*(const Expression& a, const Expression& b) {
  return Expression::binary(BinaryOp::Mul, a, b);
}
Expression operator/(const Expression& a, const Expression& b) {
  return Expression::binary(BinaryOp::Div, a, b);
}
Expression operator-(const Expression& a) { return Expression::negate(a); }
Expression pow(const Expression& base, const Expression& exponent) {
  return Expression::binary(BinaryOp::Pow, base, exponent);
}

double Expression::evaluate(const Environment& env) const { return eval_node(*root_, env); }

std::set<std::string> Expression::variables() const {
  std::set<std::string> out;
  collect_variables(*root_, out);
  return out;
}

bool Expression::depends_on(std::string_view name) const { return node_depends_on(*root_, name); }

std::string Expression::to_string() const {
  std::string out;
  print_node(*root_, out);
  return out;
}


Expression parse(std::string_view text) {
  Parser p(text);
  return Expression::from_node(p.parse_all());
}

Expression differentiate(const Expression& e, std::string_view var) {
  const Node& n = e.node();
  if (!e.depends_on(var)) return Expression::number(0.0);
  switch (n.kind) {
    case Node::Kind::Number: return Expression::number(0.0);
    case Node::Kind::Variable: return Expression::number(n.name == var ? 1.0 : 0.0);
    case Node::Kind::Negate: return -differentiate(Expression::from_node(n.lhs), var);
    case Node::Kind::Binary: {
      const Expression u = Expression::from_node(n.lhs);
      const Expression v = Expression::from_node(n.rhs);
      const Expression du = differentiate(u, var);
      const Expression dv = differentiate(v, var);
      switch (n.op) {
        case BinaryOp::Add: return du + dv;
        case BinaryOp::Sub: return du - dv;
        case BinaryOp::Mul: return du * v + u * dv;
        case BinaryOp::Div:
          return (du * v - u * dv) / pow(v, Expression::number(2.0));
        case BinaryOp::Pow:
          if (!v.depends_on(var)) {
            return v * pow(u, v - Expression::number(1.0)) * du;
          }
          return e * (dv * Expression::call(Func::Log, u) + v * du / u);
      }
      break;
    }
    case Node::Kind::Call: {
      const Expression u = Expression::from_node(n.lhs);
      const Expression du = differentiate(u, var);
      const Expression one = Expression::number(1.0);
      const Expression two = Expression::number(2.0);
      Expression outer;
      switch (n.func) {
        case Func::Sin: outer = Expression::call(Func::Cos, u); break;
        case Func::Cos: outer = -Expression::call(Func::Sin, u); break;
        case Func::Tan: outer = one + pow(Expression::call(Func::Tan, u), two); break;
        case Func::Cot: outer = -(one + pow(Expression::call(Func::Cot, u), two)); break;
        case Func::Tanh: outer = one - pow(Expression::call(Func::Tanh, u), two); break;
        case Func::Atanh: outer = one / (one - pow(u, two)); break;
        case Func::Sqrt: outer = one / (two * Expression::call(Func::Sqrt, u)); break;
        case Func::Abs: outer = Expression::call(Func::SignNz, u); break;
        case Func::Sign:
        case Func::SignNz:
        case Func::ZeroNz: outer = Expression::call(Func::ZeroNz, u); break;
        case Func::Exp: outer = Expression::call(Func::Exp, u); break;
        case Func::Log: outer = one / u; break;
      }
      return outer * du;
    }
  }
  return Expression::number(0.0);
}

Expression substitute(const Expression& e, std::string_view var, const Expression& replacement) {
  const Node& n = e.node();
  if (!e.depends_on(var)) return e;
  switch (n.kind) {
    case Node::Kind::Number: return e;
    case Node::Kind::Variable: return n.name == var ? replacement : e;
    case Node::Kind::Negate:
      return Expression::negate(substitute(Expression::from_node(n.lhs), var, replacement));
    case Node::Kind::Binary:
      return Expression::binary(n.op, substitute(Expression::from_node(n.lhs), var, replacement),
                                substitute(Expression::from_node(n.rhs), var, replacement));
    case Node::Kind::Call:
      return Expression::call(n.func, substitute(Expression::from_node(n.lhs), var, replacement));
  }
  return e;
}

// --- compiled form ----------------------------------------------------------

CompiledExpression::CompiledExpression(const Expression& e, std::span<const std::string> slots) {
  emit(e.node(), slots, 0);
}

void CompiledExpression::emit(const Node& n, std::span<const std::string> slots, int depth) {
  max_depth_ = std::max(max_depth_, depth + 1);
  switch (n.kind) {
    case Node::Kind::Number:
      code_.push_back({Op::Const, Func{}, static_cast<std::uint32_t>(constants_.size())});
      constants_.push_back(n.value);
      return;
    case Node::Kind::Variable: {
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i] == n.name) {
          code_.push_back({Op::Load, Func{}, static_cast<std::uint32_t>(i)});
          return;
        }
      }
      throw UnboundVariable(n.name);
    }
    case Node::Kind::Negate:
      emit(*n.lhs, slots, depth);
      code_.push_back({Op::Neg, Func{}, 0});
      return;
    case Node::Kind::Call:
      emit(*n.lhs, slots, depth);
      code_.push_back({Op::Call, n.func, 0});
      return;
    case Node::Kind::Binary: {
      emit(*n.lhs, slots, depth);
      emit(*n.rhs, slots, depth + 1);
      Op op = Op::Add;
      switch (n.op) {
        case BinaryOp::Add: op = Op::Add; break;
        case BinaryOp::Sub: op = Op::Sub; break;
        case BinaryOp::Mul: op = Op::Mul; break;
        case BinaryOp::Div: op = Op::Div; break;
        case BinaryOp::Pow: op = Op::Pow; break;
      }
      code_.push_back({op, Func{}, 0});
      return;
    }
  }
}

double CompiledExpression::operator()(std::span<const double> values) const {
  constexpr int kInline = 48;
  std::array<double, kInline> inline_stack;
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (max_depth_ > kInline) {
    heap_stack.resize(static_cast<std::size_t>(max_depth_));
    stack = heap_stack.data();
  }
  int top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: stack[top++] = constants_[in.index]; break;
      case Op::Load: stack[top++] = values[in.index]; break;
      case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::Call: stack[top - 1] = apply_function(in.func, stack[top - 1]); break;
      case Op::Add: --top; stack[top - 1] = apply_binary(BinaryOp::Add, stack[top - 1], stack[top]); break;
      case Op::Sub: --top; stack[top - 1] = apply_binary(BinaryOp::Sub, stack[top - 1], stack[top]); break;
      case Op::Mul: --top; stack[top - 1] = apply_binary(BinaryOp::Mul, stack[top - 1], stack[top]); break;
      case Op::Div: --top; stack[top - 1] = apply_binary(BinaryOp::Div, stack[top - 1], stack[top]); break;
      case Op::Pow: --top; stack[top - 1] = apply_binary(BinaryOp::Pow, stack[top - 1], stack[top]); break;
    }
  }
  return top > 0 ? stack[0] : 0.0;
}

}  // namespace nlslide
