#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nhmech/constraint.hpp"

namespace nhmech {

/// One evaluation of the constrained dynamics at a state: unconstrained and
/// constrained accelerations, the fibre-normal correction coefficients on
/// the complement, and the multipliers lambda_a = g(a - a0, X_a).
struct DynamicsSample {
  Eigen::VectorXd a0;     // n
  Eigen::VectorXd a;      // n
  Eigen::VectorXd gamma;  // n - m
  Eigen::VectorXd lambda; // n - m
};

/// Unconstrained Euler-Lagrange acceleration: solve
/// g a0 = dL/dq - (d2L/dudq) u. Errors out on a singular Hessian.
Eigen::VectorXd gamma0(const ConstrainedSystem& system, const TangentState& state);

/// Production path (A): a = a0 + X_a gamma^a with gamma fixed by tangency
/// (the rate of the complement quasi-velocities under the flow vanishes).
/// The state must lie on C within on_c_tol.
DynamicsSample gamma_constrained(const ConstrainedSystem& system, const TangentState& state,
                                 double on_c_tol = 1e-9);

/// Verification path (B): acceleration from the frame ansatz
/// a = v^beta dX_beta/dq u + Gamma^beta X_beta, with the m x m system
/// g_db Gamma^b = X_d . (dL/dq - (d2L/dudq) u) - X_d^T g (v^b dX_b u)
/// coming from the defining equations on the distribution basis. Independent
/// of the complement policy.
Eigen::VectorXd gamma_constrained_frame_path(const ConstrainedSystem& system,
                                             const TangentState& state,
                                             double on_c_tol = 1e-9);

/// Reaction one-form: epsilon(Z) = g(a - a0, Z(q)). Vanishes on the
/// distribution (the d'Alembert condition).
double reaction_form(const ConstrainedSystem& system, const VectorFieldQ& Z,
                     const TangentState& state);
double reaction_form(const ConstrainedSystem& system, const Eigen::VectorXd& z_at_q,
                     const TangentState& state);

/// For mechanical systems and Y normal to the distribution, returns the pair
/// (epsilon(Y), g(Y, Pi(u,u)) + Y(phi)); the two agree for the constrained
/// flow. Throws PreconditionError when Y is not normal to the distribution
/// at the state.
std::pair<double, double> mechanical_reaction_check(const ConstrainedSystem& system,
                                                    const VectorFieldQ& Y,
                                                    const TangentState& state);

struct TrajectorySample {
  double t = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd u;
  Eigen::VectorXd v;      // all n quasi-velocities against the policy frame
  double energy = 0.0;
  Eigen::VectorXd lambda; // n - m multipliers
  std::vector<double> monitors;
};

struct Trajectory {
  std::vector<std::string> monitor_names;
  std::vector<TrajectorySample> samples;

  /// max |f(t) - f(0)| over the samples for a per-sample scalar.
  double drift(const std::function<double(const TrajectorySample&)>& f) const;
  double monitor_drift(int index) const;
  double energy_drift() const;
  /// max |v^a| over all samples.
  double constraint_drift(int m) const;
};

struct IntegrateOptions {
  bool project_drift = false;
  /// Named scalar monitors, expressions over the (q, u) table.
  std::vector<std::pair<std::string, Expr>> monitors;
};

/// Classical fixed-step RK4 on (q, u) with the constrained acceleration.
/// The initial state must satisfy the constraints within 1e-9. With
/// project_drift the velocity is re-projected onto the distribution after
/// each step by zeroing the complement quasi-velocities.
Trajectory integrate(const ConstrainedSystem& system, const TangentState& initial, double t_end,
                     double step, const IntegrateOptions& options = {});

} // namespace nhmech
