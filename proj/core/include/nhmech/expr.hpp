#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nhmech/errors.hpp"

namespace nhmech {

/// Fixed, duplicate-free list of variable names. The position of a name is
/// its variable id; expressions bind values by id, so evaluation takes a
/// plain span ordered like the table.
class SymbolTable {
public:
  SymbolTable() = default;
  explicit SymbolTable(std::vector<std::string> names);

  int index_of(std::string_view name) const; // -1 when absent
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

private:
  std::vector<std::string> names_;
};

namespace detail {
struct ExprNode;
}

/// Immutable scalar expression over a symbol table. Construction folds
/// constants; nothing else is simplified. Evaluation and differentiation are
/// pure, so a single Expr may be used from many threads at once.
class Expr {
public:
  Expr() = default;

  static Expr constant(double value);
  static Expr variable(int index, std::string name);

  Expr operator-() const;
  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  static Expr pow(const Expr& base, const Expr& exponent);
  /// name must be one of: sin cos tan exp log sqrt abs.
  static Expr apply(std::string_view function, const Expr& argument);

  bool empty() const { return root_ == nullptr; }

  /// values[i] binds the variable with id i; the span must cover every
  /// variable appearing in the tree. Throws EvalDomainError on any domain
  /// violation or non-finite intermediate.
  double evaluate(std::span<const double> values) const;

  /// Exact symbolic partial derivative with respect to the given variable id.
  Expr derivative(int var_index) const;

  bool depends_on(int var_index) const;
  int max_var_index() const; // -1 when the tree has no variables

  std::string to_string() const;
  bool structurally_equal(const Expr& other) const;

private:
  explicit Expr(std::shared_ptr<const detail::ExprNode> root) : root_(std::move(root)) {}
  std::shared_ptr<const detail::ExprNode> root_;
  friend Expr parse(std::string_view, const SymbolTable&);
};

/// Recursive-descent parse of the fixed grammar: ^ (right-assoc) over unary
/// minus over * / over + - (left-assoc), parenthesized subexpressions,
/// function application by name, insignificant whitespace. Identifiers not
/// naming a function must appear in `symbols`.
Expr parse(std::string_view source, const SymbolTable& symbols);

/// parse + evaluate + derivative conveniences used by the operation contracts.
double evaluate(const Expr& expr, std::span<const double> values);
double derivative(const Expr& expr, std::span<const int> vars, std::span<const double> values);

} // namespace nhmech
