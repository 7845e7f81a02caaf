#include "nhmech/dynamics.hpp"

#include <Eigen/LU>
#include <cmath>

#include "nhmech/conservation.hpp"

namespace nhmech {

namespace {

void check_solvable(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, const char* what) {
  double rc = lu.rcond();
  if (!(rc > 1e-12)) throw RegularityError(std::string(what) + ": matrix numerically singular");
}

Eigen::VectorXd gamma0_impl(const Lagrangian& L, const TangentState& state) {
  Eigen::MatrixXd g = L.hessian_uu(state);
  Eigen::VectorXd rhs = L.dq(state) - L.hessian_uq(state) * state.u;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(g);
  check_solvable(lu, "Euler-Lagrange solve");
  return lu.solve(rhs);
}

// Shared core of algorithm (A); assumes the caller has done membership checks.
DynamicsSample constrained_impl(const ConstrainedSystem& system, const TangentState& state) {
  int n = system.n();
  int m = system.m();
  const Lagrangian& L = system.lagrangian();

  DynamicsSample out;
  out.a0 = gamma0_impl(L, state);

  Eigen::MatrixXd F(n, n);
  F.leftCols(m) = system.d_basis_at(state.q);
  Eigen::MatrixXd N;
  if (m < n) {
    N = system.complement_at(state);
    F.rightCols(n - m) = N;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> flu(F);
  check_solvable(flu, "frame solve");
  Eigen::VectorXd v = flu.solve(state.u);

  if (m == n) {
    out.a = out.a0;
    out.gamma = Eigen::VectorXd::Zero(0);
    out.lambda = Eigen::VectorXd::Zero(0);
    return out;
  }

  // Rate of the quasi-velocities under the unconstrained flow:
  //   d/dt v = F^{-1} (a0 - (d_u F) v),  (d_u F) v = sum_j u_j dF/dq_j v.
  Eigen::VectorXd transport = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < m; ++j) {
    const auto& Xj = system.distribution().basis()[static_cast<std::size_t>(j)];
    if (v[j] != 0.0) transport += v[j] * Xj.jacobian_times(state.q, state.u);
  }
  // Complement columns are state-local; their formal field derivative is not
  // defined. Tangency only constrains the distribution part, and on C the
  // complement coefficients v^a vanish, so their transport terms drop out.
  Eigen::VectorXd rate0 = flu.solve(out.a0 - transport);
  out.gamma = -rate0.tail(n - m);
  out.a = out.a0 + N * out.gamma;

  Eigen::MatrixXd g = L.hessian_uu(state);
  out.lambda = N.transpose() * g * (out.a - out.a0);
  return out;
}

} // namespace

Eigen::VectorXd gamma0(const ConstrainedSystem& system, const TangentState& state) {
  validate_state(state, system.n());
  return gamma0_impl(system.lagrangian(), state);
}

DynamicsSample gamma_constrained(const ConstrainedSystem& system, const TangentState& state,
                                 double on_c_tol) {
  validate_state(state, system.n());
  Membership mem = membership(system, state, on_c_tol);
  if (!mem.on_c)
    throw PreconditionError("gamma_constrained requires a state on the constraint set");
  return constrained_impl(system, state);
}

Eigen::VectorXd gamma_constrained_frame_path(const ConstrainedSystem& system,
                                             const TangentState& state, double on_c_tol) {
  validate_state(state, system.n());
  Membership mem = membership(system, state, on_c_tol);
  if (!mem.on_c)
    throw PreconditionError("gamma_constrained requires a state on the constraint set");

  int n = system.n();
  int m = system.m();
  const Lagrangian& L = system.lagrangian();

  Eigen::MatrixXd A = system.d_basis_at(state.q);
  Eigen::MatrixXd g = L.hessian_uu(state);
  Eigen::MatrixXd g_dd = A.transpose() * g * A;

  // Distribution quasi-velocities from the basis alone (least squares; exact
  // on C where u lies in the span).
  Eigen::VectorXd v = (A.transpose() * A).ldlt().solve(A.transpose() * state.u);

  Eigen::VectorXd transport = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < m; ++j) {
    const auto& Xj = system.distribution().basis()[static_cast<std::size_t>(j)];
    transport += v[j] * Xj.jacobian_times(state.q, state.u);
  }

  Eigen::VectorXd rhs =
      A.transpose() * (L.dq(state) - L.hessian_uq(state) * state.u - g * transport);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(g_dd);
  check_solvable(lu, "distribution metric block");
  Eigen::VectorXd Gamma = lu.solve(rhs);
  return transport + A * Gamma;
}

double reaction_form(const ConstrainedSystem& system, const Eigen::VectorXd& z_at_q,
                     const TangentState& state) {
  DynamicsSample dyn = gamma_constrained(system, state);
  Eigen::MatrixXd g = system.lagrangian().hessian_uu(state);
  return (dyn.a - dyn.a0).dot(g * z_at_q);
}

double reaction_form(const ConstrainedSystem& system, const VectorFieldQ& Z,
                     const TangentState& state) {
  return reaction_form(system, Z.at(state.q), state);
}

std::pair<double, double> mechanical_reaction_check(const ConstrainedSystem& system,
                                                    const VectorFieldQ& Y,
                                                    const TangentState& state) {
  if (!system.lagrangian().is_mechanical())
    throw UnsupportedOperationError("mechanical_reaction_check requires a mechanical Lagrangian");
  Eigen::VectorXd y = Y.at(state.q);
  Eigen::MatrixXd g = system.lagrangian().metric_at(state.q);
  Eigen::MatrixXd A = system.d_basis_at(state.q);
  Eigen::VectorXd inner = A.transpose() * g * y;
  double scale = 1.0 + y.norm() * A.cwiseAbs().maxCoeff() * g.cwiseAbs().maxCoeff();
  if (inner.cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw PreconditionError("mechanical_reaction_check requires Y normal to the distribution");

  double lhs = reaction_form(system, y, state);

  SecondFundamentalForm pi = second_fundamental_form(system, state.q);
  Eigen::VectorXd v = (A.transpose() * A).ldlt().solve(A.transpose() * state.u);
  Eigen::VectorXd pi_uu = pi.vector(v);
  double rhs = y.dot(g * pi_uu) + y.dot(system.lagrangian().potential_gradient(state.q));
  return {lhs, rhs};
}

double Trajectory::drift(const std::function<double(const TrajectorySample&)>& f) const {
  if (samples.empty()) return 0.0;
  double first = f(samples.front());
  double worst = 0.0;
  for (const auto& s : samples) worst = std::max(worst, std::abs(f(s) - first));
  return worst;
}

double Trajectory::monitor_drift(int index) const {
  return drift([index](const TrajectorySample& s) {
    return s.monitors[static_cast<std::size_t>(index)];
  });
}

double Trajectory::energy_drift() const {
  return drift([](const TrajectorySample& s) { return s.energy; });
}

double Trajectory::constraint_drift(int m) const {
  double worst = 0.0;
  for (const auto& s : samples)
    if (s.v.size() > m) worst = std::max(worst, s.v.tail(s.v.size() - m).cwiseAbs().maxCoeff());
  return worst;
}

Trajectory integrate(const ConstrainedSystem& system, const TangentState& initial, double t_end,
                     double step, const IntegrateOptions& options) {
  validate_state(initial, system.n());
  if (!(step > 0.0)) throw Error(ErrorClass::Usage, "integration step must be positive");
  if (!(t_end >= 0.0)) throw Error(ErrorClass::Usage, "t_end must be non-negative");
  Membership mem = membership(system, initial, 1e-9);
  if (!mem.on_c) throw PreconditionError("initial state violates the constraints");

  int n = system.n();
  int m = system.m();

  // The flow field extends smoothly off C; intermediate Runge-Kutta stages
  // sit O(h^2) off the constraint set, so stage evaluations skip the
  // membership check.
  auto accel = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& u) {
    TangentState s{q, u};
    return constrained_impl(system, s);
  };

  std::vector<double> monitor_buf(static_cast<std::size_t>(2 * n));
  auto record = [&](Trajectory& traj, double t, const TangentState& s) {
    TrajectorySample sample;
    sample.t = t;
    sample.q = s.q;
    sample.u = s.u;
    Eigen::MatrixXd F = system.frame_at(s);
    sample.v = Eigen::PartialPivLU<Eigen::MatrixXd>(F).solve(s.u);
    sample.energy = energy(system.lagrangian(), s);
    DynamicsSample dyn = constrained_impl(system, s);
    sample.lambda = dyn.lambda;
    for (int i = 0; i < n; ++i) {
      monitor_buf[static_cast<std::size_t>(i)] = s.q[i];
      monitor_buf[static_cast<std::size_t>(n + i)] = s.u[i];
    }
    for (const auto& [name, expr] : options.monitors)
      sample.monitors.push_back(expr.evaluate(monitor_buf));
    traj.samples.push_back(std::move(sample));
  };

  Trajectory traj;
  for (const auto& [name, expr] : options.monitors) traj.monitor_names.push_back(name);

  long steps = static_cast<long>(std::ceil(t_end / step - 1e-12));
  TangentState s = initial;
  record(traj, 0.0, s);
  for (long k = 0; k < steps; ++k) {
    double h = step;
    try {
      Eigen::VectorXd k1q = s.u;
      Eigen::VectorXd k1u = accel(s.q, s.u).a;
      Eigen::VectorXd k2q = s.u + 0.5 * h * k1u;
      Eigen::VectorXd k2u = accel(s.q + 0.5 * h * k1q, s.u + 0.5 * h * k1u).a;
      Eigen::VectorXd k3q = s.u + 0.5 * h * k2u;
      Eigen::VectorXd k3u = accel(s.q + 0.5 * h * k2q, s.u + 0.5 * h * k2u).a;
      Eigen::VectorXd k4q = s.u + h * k3u;
      Eigen::VectorXd k4u = accel(s.q + h * k3q, s.u + h * k3u).a;
      s.q += (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
      s.u += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    } catch (const Error& e) {
      throw Error(ErrorClass::Numeric, std::string(e.what()) + " at t = " +
                                           std::to_string(static_cast<double>(k) * step));
    }
    if (options.project_drift) {
      Eigen::MatrixXd F = system.frame_at(s);
      Eigen::VectorXd v = Eigen::PartialPivLU<Eigen::MatrixXd>(F).solve(s.u);
      v.tail(n - m).setZero();
      s.u = F * v;
    }
    record(traj, static_cast<double>(k + 1) * step, s);
  }
  return traj;
}

} // namespace nhmech
