#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nhmech/expr.hpp"

namespace nhmech {

/// Rectangular coordinate chart: a single open box of R^n per scenario.
struct DomainBox {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  int dim() const { return static_cast<int>(min.size()); }
  bool contains(const Eigen::VectorXd& q) const;
  Eigen::VectorXd center() const { return 0.5 * (min + max); }
};

struct ChartPoint {
  Eigen::VectorXd q;
};

/// A point of TQ: coordinates plus velocity components. The bundle
/// projection is the q accessor.
struct TangentState {
  Eigen::VectorXd q;
  Eigen::VectorXd u;
};

/// Throws on mismatched sizes or non-finite entries.
void validate_state(const TangentState& state, int n);

/// Vector field on Q: n expression components depending on coordinates only.
/// The Jacobian d(components)/dq is differentiated symbolically once at
/// construction, so pointwise evaluation stays exact and cheap.
class VectorFieldQ {
public:
  /// `n_coords` coordinate variables occupy ids [0, n) of the symbol table;
  /// the table may be larger (velocities), but components must not use
  /// ids >= n_coords.
  VectorFieldQ(std::vector<Expr> components, int n_coords);

  int dim() const { return n_; }
  const Expr& component(int i) const { return components_[static_cast<std::size_t>(i)]; }
  const Expr& jacobian_entry(int i, int j) const {
    return jacobian_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) +
                     static_cast<std::size_t>(j)];
  }

  Eigen::VectorXd at(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd jacobian_at(const Eigen::VectorXd& q) const;

  /// Directional derivative of the components along u: (dX/dq) u.
  Eigen::VectorXd jacobian_times(const Eigen::VectorXd& q, const Eigen::VectorXd& u) const;

private:
  int n_;
  std::vector<Expr> components_;
  std::vector<Expr> jacobian_; // row-major n x n
};

/// [X,Y]^i = X^j dY^i/dq^j - Y^j dX^i/dq^j, evaluated with exact derivatives.
Eigen::VectorXd lie_bracket(const VectorFieldQ& X, const VectorFieldQ& Y,
                            const Eigen::VectorXd& q);

/// The bracket as a symbolic field (components built from the operand ASTs);
/// used to iterate derived distributions.
VectorFieldQ lie_bracket_field(const VectorFieldQ& X, const VectorFieldQ& Y);

/// Constraint distribution: m < n expression fields of constant rank over
/// the domain box. Rank deficiency anywhere in the validation sample is a
/// construction-time error.
class DistributionD {
public:
  DistributionD(std::vector<VectorFieldQ> basis, DomainBox box, unsigned seed = 42,
                int validation_samples = 256);

  int n() const { return box_.dim(); }
  int m() const { return static_cast<int>(basis_.size()); }
  const std::vector<VectorFieldQ>& basis() const { return basis_; }
  const DomainBox& box() const { return box_; }

  /// n x m matrix with the basis fields as columns.
  Eigen::MatrixXd matrix_at(const Eigen::VectorXd& q) const;

private:
  std::vector<VectorFieldQ> basis_;
  DomainBox box_;
};

/// Full anholonomic frame on Q; first m fields span a distribution.
class FrameQ {
public:
  FrameQ(std::vector<VectorFieldQ> fields, int m);

  int n() const { return static_cast<int>(fields_.size()); }
  int m() const { return m_; }
  const VectorFieldQ& field(int i) const { return fields_[static_cast<std::size_t>(i)]; }
  Eigen::MatrixXd matrix_at(const Eigen::VectorXd& q) const;

private:
  std::vector<VectorFieldQ> fields_;
  int m_;
};

/// Solve u = v^i X_i(q). Errors out when the frame condition number exceeds
/// 1e12 at q.
Eigen::VectorXd quasi_velocities(const FrameQ& frame, const TangentState& state);
Eigen::VectorXd quasi_velocities(const Eigen::MatrixXd& frame_columns, const Eigen::VectorXd& u);

/// Numerical rank: singular values above `rel_tol` times the largest.
int numerical_rank(const Eigen::MatrixXd& columns, double rel_tol = 1e-9);

/// Ranks [dim D, dim D^1, dim D^2, ...] at q, where each step adjoins
/// pairwise brackets of the accumulated fields. Stops early at full rank or
/// when the rank stops growing.
std::vector<int> derived_flag(const DistributionD& D, const Eigen::VectorXd& q, int max_depth);

} // namespace nhmech
