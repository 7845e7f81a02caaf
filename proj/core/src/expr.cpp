#include "nhmech/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace nhmech {

namespace detail {

enum class Kind { Constant, Variable, Unary, Binary };
enum class UnaryOp { Neg, Sin, Cos, Tan, Exp, Log, Sqrt, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct ExprNode {
  Kind kind;
  double value = 0.0;
  int var = -1;
  std::string name;
  UnaryOp uop = UnaryOp::Neg;
  BinaryOp bop = BinaryOp::Add;
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
  long offset = -1; // byte offset in the source, -1 for synthesized nodes
};

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make_constant(double v, long offset = -1) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Constant;
  n->value = v;
  n->offset = offset;
  return n;
}

NodePtr make_variable(int index, std::string name, long offset = -1) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Variable;
  n->var = index;
  n->name = std::move(name);
  n->offset = offset;
  return n;
}

bool is_const(const NodePtr& n, double v) {
  return n->kind == Kind::Constant && n->value == v;
}

std::size_t clamp_offset(const NodePtr& n) {
  return n->offset >= 0 ? static_cast<std::size_t>(n->offset) : 0;
}

double apply_unary(UnaryOp op, double x, const NodePtr& node) {
  switch (op) {
    case UnaryOp::Neg: return -x;
    case UnaryOp::Sin: return std::sin(x);
    case UnaryOp::Cos: return std::cos(x);
    case UnaryOp::Tan: return std::tan(x);
    case UnaryOp::Exp: return std::exp(x);
    case UnaryOp::Log:
      if (x <= 0.0) throw EvalDomainError("log of non-positive value", clamp_offset(node));
      return std::log(x);
    case UnaryOp::Sqrt:
      if (x < 0.0) throw EvalDomainError("sqrt of negative value", clamp_offset(node));
      return std::sqrt(x);
    case UnaryOp::Abs: return std::abs(x);
  }
  return 0.0;
}

double apply_binary(BinaryOp op, double a, double b, const NodePtr& node) {
  switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div:
      if (b == 0.0) throw EvalDomainError("division by zero", clamp_offset(node));
      return a / b;
    case BinaryOp::Pow: {
      double r = std::pow(a, b);
      if (std::isnan(r)) throw EvalDomainError("pow outside real domain", clamp_offset(node));
      return r;
    }
  }
  return 0.0;
}

NodePtr make_unary(UnaryOp op, NodePtr child, long offset = -1) {
  if (op == UnaryOp::Neg && child->kind == Kind::Unary && child->uop == UnaryOp::Neg)
    return child->lhs;
  if (child->kind == Kind::Constant) {
    bool safe = !(op == UnaryOp::Log && child->value <= 0.0) &&
                !(op == UnaryOp::Sqrt && child->value < 0.0);
    if (safe) {
      double v = apply_unary(op, child->value, child);
      if (std::isfinite(v)) return make_constant(v);
    }
  }
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Unary;
  n->uop = op;
  n->lhs = std::move(child);
  n->offset = offset;
  return n;
}

bool function_op(std::string_view name, UnaryOp& op) {
  if (name == "sin") op = UnaryOp::Sin;
  else if (name == "cos") op = UnaryOp::Cos;
  else if (name == "tan") op = UnaryOp::Tan;
  else if (name == "exp") op = UnaryOp::Exp;
  else if (name == "log") op = UnaryOp::Log;
  else if (name == "sqrt") op = UnaryOp::Sqrt;
  else if (name == "abs") op = UnaryOp::Abs;
  else return false;
  return true;
}

NodePtr make_binary(BinaryOp op, NodePtr a, NodePtr b, long offset = -1) {
  // Constant folding only; no algebraic rewriting beyond the identities below.
  if (a->kind == Kind::Constant && b->kind == Kind::Constant) {
    bool safe = !(op == BinaryOp::Div && b->value == 0.0);
    if (safe) {
      double v = apply_binary(op, a->value, b->value, a);
      if (std::isfinite(v)) return make_constant(v);
    }
  }
  switch (op) {
    case BinaryOp::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case BinaryOp::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make_unary(UnaryOp::Neg, b);
      break;
    case BinaryOp::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_constant(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case BinaryOp::Div:
      if (is_const(b, 1.0)) return a;
      break;
    case BinaryOp::Pow:
      if (is_const(b, 1.0)) return a;
      if (is_const(b, 0.0)) return make_constant(1.0);
      break;
  }
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Binary;
  n->bop = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  n->offset = offset;
  return n;
}

double eval_node(const NodePtr& n, std::span<const double> values) {
  double v = 0.0;
  switch (n->kind) {
    case Kind::Constant:
      v = n->value;
      break;
    case Kind::Variable:
      if (n->var < 0 || static_cast<std::size_t>(n->var) >= values.size())
        throw EvalDomainError("unbound variable '" + n->name + "'", clamp_offset(n));
      v = values[static_cast<std::size_t>(n->var)];
      break;
    case Kind::Unary:
      v = apply_unary(n->uop, eval_node(n->lhs, values), n);
      break;
    case Kind::Binary:
      v = apply_binary(n->bop, eval_node(n->lhs, values), eval_node(n->rhs, values), n);
      break;
  }
  if (!std::isfinite(v)) throw EvalDomainError("non-finite value", clamp_offset(n));
  return v;
}

NodePtr diff_node(const NodePtr& n, int var) {
  switch (n->kind) {
    case Kind::Constant:
      return make_constant(0.0);
    case Kind::Variable:
      return make_constant(n->var == var ? 1.0 : 0.0);
    case Kind::Unary: {
      NodePtr f = n->lhs;
      NodePtr df = diff_node(f, var);
      if (is_const(df, 0.0)) return make_constant(0.0);
      switch (n->uop) {
        case UnaryOp::Neg: return make_unary(UnaryOp::Neg, df);
        case UnaryOp::Sin: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Cos, f), df);
        case UnaryOp::Cos:
          return make_unary(UnaryOp::Neg,
                            make_binary(BinaryOp::Mul, make_unary(UnaryOp::Sin, f), df));
        case UnaryOp::Tan: {
          // d tan = (1 + tan^2) df
          NodePtr t = make_unary(UnaryOp::Tan, f);
          NodePtr sec2 = make_binary(BinaryOp::Add, make_constant(1.0),
                                     make_binary(BinaryOp::Mul, t, t));
          return make_binary(BinaryOp::Mul, sec2, df);
        }
        case UnaryOp::Exp: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Exp, f), df);
        case UnaryOp::Log: return make_binary(BinaryOp::Div, df, f);
        case UnaryOp::Sqrt:
          return make_binary(BinaryOp::Div, df,
                             make_binary(BinaryOp::Mul, make_constant(2.0),
                                         make_unary(UnaryOp::Sqrt, f)));
        case UnaryOp::Abs:
          // sign(f) df, expressed as f/|f| df; differentiating |f| at f=0 is a
          // genuine domain error and surfaces as division by zero.
          return make_binary(BinaryOp::Mul,
                             make_binary(BinaryOp::Div, f, make_unary(UnaryOp::Abs, f)), df);
      }
      return make_constant(0.0);
    }
    case Kind::Binary: {
      NodePtr f = n->lhs, g = n->rhs;
      switch (n->bop) {
        case BinaryOp::Add:
          return make_binary(BinaryOp::Add, diff_node(f, var), diff_node(g, var));
        case BinaryOp::Sub:
          return make_binary(BinaryOp::Sub, diff_node(f, var), diff_node(g, var));
        case BinaryOp::Mul:
          return make_binary(BinaryOp::Add,
                             make_binary(BinaryOp::Mul, diff_node(f, var), g),
                             make_binary(BinaryOp::Mul, f, diff_node(g, var)));
        case BinaryOp::Div:
          return make_binary(
              BinaryOp::Div,
              make_binary(BinaryOp::Sub, make_binary(BinaryOp::Mul, diff_node(f, var), g),
                          make_binary(BinaryOp::Mul, f, diff_node(g, var))),
              make_binary(BinaryOp::Mul, g, g));
        case BinaryOp::Pow: {
          if (g->kind == Kind::Constant) {
            // c f^(c-1) f'; valid for negative bases with integer exponents,
            // unlike the logarithmic form.
            double c = g->value;
            return make_binary(
                BinaryOp::Mul, make_constant(c),
                make_binary(BinaryOp::Mul,
                            make_binary(BinaryOp::Pow, f, make_constant(c - 1.0)),
                            diff_node(f, var)));
          }
          // f^g (g' log f + g f'/f)
          NodePtr term1 = make_binary(BinaryOp::Mul, diff_node(g, var), make_unary(UnaryOp::Log, f));
          NodePtr term2 = make_binary(BinaryOp::Mul, g, make_binary(BinaryOp::Div, diff_node(f, var), f));
          return make_binary(BinaryOp::Mul, make_binary(BinaryOp::Pow, f, g),
                             make_binary(BinaryOp::Add, term1, term2));
        }
      }
      return make_constant(0.0);
    }
  }
  return make_constant(0.0);
}

bool depends_node(const NodePtr& n, int var) {
  switch (n->kind) {
    case Kind::Constant: return false;
    case Kind::Variable: return n->var == var;
    case Kind::Unary: return depends_node(n->lhs, var);
    case Kind::Binary: return depends_node(n->lhs, var) || depends_node(n->rhs, var);
  }
  return false;
}

int max_var_node(const NodePtr& n) {
  switch (n->kind) {
    case Kind::Constant: return -1;
    case Kind::Variable: return n->var;
    case Kind::Unary: return max_var_node(n->lhs);
    case Kind::Binary: return std::max(max_var_node(n->lhs), max_var_node(n->rhs));
  }
  return -1;
}

bool equal_node(const NodePtr& a, const NodePtr& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Kind::Constant: return a->value == b->value;
    case Kind::Variable: return a->var == b->var;
    case Kind::Unary: return a->uop == b->uop && equal_node(a->lhs, b->lhs);
    case Kind::Binary:
      return a->bop == b->bop && equal_node(a->lhs, b->lhs) && equal_node(a->rhs, b->rhs);
  }
  return false;
}

// Printing precedence levels: +,- = 1; *,/ = 2; unary - = 3; ^ = 4; atoms = 5.
// Negative constants print bare ("-3") and therefore carry unary precedence.
int print_prec(const NodePtr& n) {
  switch (n->kind) {
    case Kind::Constant: return n->value < 0.0 ? 3 : 5;
    case Kind::Variable: return 5;
    case Kind::Unary: return n->uop == UnaryOp::Neg ? 3 : 5;
    case Kind::Binary:
      switch (n->bop) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
      }
  }
  return 5;
}

const char* function_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Abs: return "abs";
  }
  return "?";
}

void print_node(const NodePtr& n, std::string& out);

void print_child(const NodePtr& child, int min_prec, std::string& out) {
  if (print_prec(child) < min_prec) {
    out += '(';
    print_node(child, out);
    out += ')';
  } else {
    print_node(child, out);
  }
}

void print_node(const NodePtr& n, std::string& out) {
  switch (n->kind) {
    case Kind::Constant: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", n->value);
      out += buf;
      return;
    }
    case Kind::Variable:
      out += n->name;
      return;
    case Kind::Unary:
      if (n->uop == UnaryOp::Neg) {
        out += '-';
        print_child(n->lhs, 4, out); // grammar slot below unary minus is power
      } else {
        out += function_name(n->uop);
        out += '(';
        print_node(n->lhs, out);
        out += ')';
      }
      return;
    case Kind::Binary: {
      int p = print_prec(n);
      switch (n->bop) {
        case BinaryOp::Add:
          print_child(n->lhs, p, out);
          out += '+';
          print_child(n->rhs, p, out);
          return;
        case BinaryOp::Sub:
          print_child(n->lhs, p, out);
          out += '-';
          print_child(n->rhs, p + 1, out);
          return;
        case BinaryOp::Mul:
          print_child(n->lhs, p, out);
          out += '*';
          print_child(n->rhs, p, out);
          return;
        case BinaryOp::Div:
          print_child(n->lhs, p, out);
          out += '/';
          print_child(n->rhs, p + 1, out);
          return;
        case BinaryOp::Pow:
          print_child(n->lhs, 5, out); // base slot is a primary
          out += '^';
          print_child(n->rhs, 3, out); // exponent slot admits unary minus
          return;
      }
    }
  }
}

} // namespace detail

using detail::BinaryOp;
using detail::NodePtr;
using detail::UnaryOp;

SymbolTable::SymbolTable(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ScenarioError("empty symbol name");
    if (!seen.insert(n).second) throw ScenarioError("duplicate symbol name '" + n + "'");
  }
}

int SymbolTable::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

Expr Expr::constant(double value) { return Expr(detail::make_constant(value)); }

Expr Expr::variable(int index, std::string name) {
  return Expr(detail::make_variable(index, std::move(name)));
}

Expr Expr::operator-() const { return Expr(detail::make_unary(UnaryOp::Neg, root_)); }

Expr operator+(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(BinaryOp::Add, a.root_, b.root_));
}
Expr operator-(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(BinaryOp::Sub, a.root_, b.root_));
}
Expr operator*(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(BinaryOp::Mul, a.root_, b.root_));
}
Expr operator/(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(BinaryOp::Div, a.root_, b.root_));
}

Expr Expr::pow(const Expr& base, const Expr& exponent) {
  return Expr(detail::make_binary(BinaryOp::Pow, base.root_, exponent.root_));
}

Expr Expr::apply(std::string_view function, const Expr& argument) {
  UnaryOp op;
  if (!detail::function_op(function, op))
    throw SyntaxError("unknown function '" + std::string(function) + "'", 0);
  return Expr(detail::make_unary(op, argument.root_));
}

double Expr::evaluate(std::span<const double> values) const {
  if (!root_) throw EvalDomainError("empty expression", 0);
  return detail::eval_node(root_, values);
}

Expr Expr::derivative(int var_index) const {
  if (!root_) throw EvalDomainError("empty expression", 0);
  return Expr(detail::diff_node(root_, var_index));
}

bool Expr::depends_on(int var_index) const {
  return root_ && detail::depends_node(root_, var_index);
}

int Expr::max_var_index() const { return root_ ? detail::max_var_node(root_) : -1; }

std::string Expr::to_string() const {
  if (!root_) return "";
  std::string out;
  detail::print_node(root_, out);
  return out;
}

bool Expr::structurally_equal(const Expr& other) const {
  if (!root_ || !other.root_) return root_ == other.root_;
  return detail::equal_node(root_, other.root_);
}

namespace {

struct Parser {
  std::string_view src;
  const SymbolTable& symbols;
  std::size_t pos = 0;

  explicit Parser(std::string_view s, const SymbolTable& t) : src(s), symbols(t) {}

  std::size_t clamp(std::size_t p) const {
    if (src.empty()) return 0;
    return p >= src.size() ? src.size() - 1 : p;
  }

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= src.size();
  }

  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }

  bool consume(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  NodePtr parse_expression() {
    NodePtr lhs = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+' || c == '-') {
        long at = static_cast<long>(pos);
        ++pos;
        NodePtr rhs = parse_term();
        lhs = detail::make_binary(c == '+' ? BinaryOp::Add : BinaryOp::Sub, lhs, rhs, at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      char c = peek();
      if (c == '*' || c == '/') {
        long at = static_cast<long>(pos);
        ++pos;
        NodePtr rhs = parse_unary();
        lhs = detail::make_binary(c == '*' ? BinaryOp::Mul : BinaryOp::Div, lhs, rhs, at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (pos < src.size() && src[pos] == '-') {
      long at = static_cast<long>(pos);
      ++pos;
      return detail::make_unary(UnaryOp::Neg, parse_unary(), at);
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_ws();
    if (pos < src.size() && src[pos] == '^') {
      long at = static_cast<long>(pos);
      ++pos;
      NodePtr exponent = parse_unary(); // right-associative; admits unary minus
      return detail::make_binary(BinaryOp::Pow, base, exponent, at);
    }
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos >= src.size()) throw SyntaxError("unexpected end of expression", clamp(pos));
    std::size_t start = pos;
    char c = src[pos];

    if (c == '(') {
      ++pos;
      NodePtr inner = parse_expression();
      if (!consume(')')) throw SyntaxError("expected ')'", clamp(pos));
      return inner;
    }

    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(src.data() + pos, src.data() + src.size(), value);
      if (ec != std::errc()) throw SyntaxError("malformed number", clamp(start));
      pos = static_cast<std::size_t>(ptr - src.data());
      auto node = detail::make_constant(value, static_cast<long>(start));
      return node;
    }

    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
        ++pos;
      std::string ident(src.substr(start, pos - start));
      if (consume('(')) {
        UnaryOp op;
        if (!detail::function_op(ident, op)) throw UnknownIdentifierError(ident, clamp(start));
        NodePtr arg = parse_expression();
        if (!consume(')')) throw SyntaxError("expected ')'", clamp(pos));
        return detail::make_unary(op, arg, static_cast<long>(start));
      }
      int index = symbols.index_of(ident);
      if (index < 0) throw UnknownIdentifierError(ident, clamp(start));
      return detail::make_variable(index, std::move(ident), static_cast<long>(start));
    }

    throw SyntaxError(std::string("unexpected character '") + c + "'", clamp(pos));
  }
};

} // namespace

Expr parse(std::string_view source, const SymbolTable& symbols) {
  Parser p(source, symbols);
  NodePtr root = p.parse_expression();
  if (!p.at_end()) throw SyntaxError("trailing input", p.clamp(p.pos));
  return Expr(std::move(root));
}

double evaluate(const Expr& expr, std::span<const double> values) {
  return expr.evaluate(values);
}

double derivative(const Expr& expr, std::span<const int> vars, std::span<const double> values) {
  Expr d = expr;
  for (int v : vars) d = d.derivative(v);
  return d.evaluate(values);
}

} // namespace nhmech
