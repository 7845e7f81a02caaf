#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "nhmech/geometry.hpp"

namespace nhmech {

/// Fibre-metric Hessian at one state, with its frame blocks. Indices split
/// as distribution (d, size m) and complement (c, size n-m).
struct FibreMetricSample {
  Eigen::MatrixXd g;    // n x n, symmetric
  Eigen::MatrixXd g_dd; // m x m
  Eigen::MatrixXd g_cc; // (n-m) x (n-m)
  Eigen::MatrixXd g_cd; // (n-m) x m
};

/// Cartan forms at one state in coordinates (dq, du) of T(TQ):
/// theta = (dL/du, 0), omega(xi, eta) = xi^T Omega eta with
/// Omega = [[B^T - B, -g], [g, 0]], B_ij = d2L/du_i dq_j.
struct CartanSample {
  Eigen::VectorXd theta; // 2n covector
  Eigen::MatrixXd omega; // 2n x 2n, skew
};

/// Lagrangian on TQ. Either a general expression L(q, u) or mechanical type
/// 1/2 u^T G(q) u - phi(q). All first and second fibre derivatives are exact:
/// symbolic for the general form, assembled from metric derivatives for the
/// mechanical form. Immutable and safe for concurrent evaluation.
class Lagrangian {
public:
  /// `expr` over a symbol table of 2n entries: q ids [0,n), u ids [n,2n).
  static Lagrangian general(Expr expr, int n);
  /// metric entries and potential depend on coordinates only.
  static Lagrangian mechanical(std::vector<std::vector<Expr>> metric, Expr potential, int n);

  int n() const { return n_; }
  bool is_mechanical() const { return mechanical_; }

  double value(const TangentState& s) const;
  Eigen::VectorXd dq(const TangentState& s) const;      // dL/dq
  Eigen::VectorXd du(const TangentState& s) const;      // dL/du
  Eigen::MatrixXd hessian_uu(const TangentState& s) const;
  Eigen::MatrixXd hessian_uq(const TangentState& s) const; // (i,j) = d2L/du_i dq_j

  // Mechanical-only surface; throws UnsupportedOperationError otherwise.
  Eigen::MatrixXd metric_at(const Eigen::VectorXd& q) const;
  std::vector<Eigen::MatrixXd> metric_derivatives(const Eigen::VectorXd& q) const;
  double potential_at(const Eigen::VectorXd& q) const;
  Eigen::VectorXd potential_gradient(const Eigen::VectorXd& q) const; // dphi (covector)

private:
  Lagrangian() = default;

  int n_ = 0;
  bool mechanical_ = false;

  // general form
  Expr expr_;
  std::vector<Expr> dq_, du_;
  std::vector<Expr> d2uu_, d2uq_; // row-major n x n

  // mechanical form
  std::vector<Expr> metric_;         // row-major n x n
  std::vector<Expr> metric_dq_;      // row-major n x n x n, [k][i][j] = dG_ij/dq_k
  Expr potential_;
  std::vector<Expr> potential_dq_;

  std::span<const double> pack(const TangentState& s, std::vector<double>& buffer) const;
};

/// X^V(L) = X^i dL/du^i; equals g(X, u) for mechanical L.
double vertical_lift_L(const Lagrangian& L, const VectorFieldQ& X, const TangentState& s);

/// X^C(L) = X^i dL/dq^i + u^j dX^i/dq^j dL/du^i.
double complete_lift_L(const Lagrangian& L, const VectorFieldQ& X, const TangentState& s);

/// E_L = u^i dL/du^i - L.
double energy(const Lagrangian& L, const TangentState& s);

/// Exact differential of the energy as a 2n covector in (dq, du):
/// dE = (B^T u - dL/dq, g u) with B = hessian_uq.
Eigen::VectorXd energy_differential(const Lagrangian& L, const TangentState& s);

CartanSample cartan_forms(const Lagrangian& L, const TangentState& s);

/// Hessian blocks by congruence with the frame columns [X_d | X_c].
/// Errors out when the distribution block g_dd is singular.
FibreMetricSample hessian_metric(const Lagrangian& L, const TangentState& s,
                                 const Eigen::MatrixXd& frame_columns, int m);

/// Levi-Civita Christoffel symbols of the mechanical metric; result[i](j,k).
std::vector<Eigen::MatrixXd> christoffels(const Lagrangian& L, const Eigen::VectorXd& q);

/// (nabla_X Y)^i = X^j dY^i/dq^j + Gamma^i_jk X^j Y^k.
Eigen::VectorXd covariant_derivative(const Lagrangian& L, const VectorFieldQ& X,
                                     const VectorFieldQ& Y, const Eigen::VectorXd& q);

/// grad phi = G^{-1} dphi.
Eigen::VectorXd grad_potential(const Lagrangian& L, const Eigen::VectorXd& q);

} // namespace nhmech
