#include "nhmech/constraint.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>

namespace nhmech {

namespace {

// Euclidean orthogonal projector onto the complement of span(A), and its
// directional derivative. These furnish defining functions for the
// constraint set: a tangent vector (dq, du) is tangent to C at (q, u) iff
// P du + (d_dq P) u = 0.
struct ProjectorAt {
  Eigen::MatrixXd P;
  Eigen::MatrixXd A;         // n x m basis columns
  Eigen::MatrixXd M;         // (A^T A)^{-1}
  std::vector<Eigen::MatrixXd> dA; // per coordinate direction

  Eigen::MatrixXd directional(const Eigen::VectorXd& b) const {
    int n = static_cast<int>(P.rows());
    int m = static_cast<int>(A.cols());
    if (dA.empty()) return Eigen::MatrixXd::Zero(n, n); // full tangent bundle
    Eigen::MatrixXd dAb = Eigen::MatrixXd::Zero(n, m);
    for (int j = 0; j < n; ++j)
      if (b[j] != 0.0) dAb += b[j] * dA[static_cast<std::size_t>(j)];
    Eigen::MatrixXd dM = -M * (dAb.transpose() * A + A.transpose() * dAb) * M;
    return -(dAb * M * A.transpose() + A * dM * A.transpose() + A * M * dAb.transpose());
  }
};

ProjectorAt projector_at(const DistributionD& D, const Eigen::VectorXd& q) {
  int n = D.n();
  int m = D.m();
  ProjectorAt out;
  out.A = D.matrix_at(q);
  if (m == n) {
    out.P = Eigen::MatrixXd::Zero(n, n);
    out.M = Eigen::MatrixXd();
    return out;
  }
  out.M = (out.A.transpose() * out.A).inverse();
  out.P = Eigen::MatrixXd::Identity(n, n) - out.A * out.M * out.A.transpose();
  out.dA.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd dAj(n, m);
    for (int c = 0; c < m; ++c) {
      for (int r = 0; r < n; ++r) {
        std::span<const double> vals(q.data(), static_cast<std::size_t>(q.size()));
        dAj(r, c) = D.basis()[static_cast<std::size_t>(c)].jacobian_entry(r, j).evaluate(vals);
      }
    }
    out.dA.push_back(std::move(dAj));
  }
  return out;
}

} // namespace

ConstrainedSystem::ConstrainedSystem(Lagrangian lagrangian, DistributionD distribution,
                                     unsigned seed, int validation_samples)
    : lagrangian_(std::move(lagrangian)), distribution_(std::move(distribution)) {
  if (lagrangian_.n() != distribution_.n())
    throw ScenarioError("Lagrangian and distribution dimensions disagree");

  for (const auto& state : sample_states_on_c(*this, SampleSpec{validation_samples, seed})) {
    Eigen::MatrixXd g = lagrangian_.hessian_uu(state);
    if (lagrangian_.is_mechanical()) {
      double scale = g.cwiseAbs().maxCoeff();
      if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + scale))
        throw ScenarioError("mechanical metric is not symmetric at a sampled point");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
      if (es.eigenvalues().minCoeff() <= 0.0)
        throw ScenarioError("mechanical metric is not positive definite at a sampled point");
    } else {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
      if (!lu.isInvertible())
        throw RegularityError("Lagrangian Hessian singular at a sampled state");
    }
    Eigen::MatrixXd A = d_basis_at(state.q);
    Eigen::MatrixXd g_dd = A.transpose() * g * A;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(g_dd);
    if (!lu.isInvertible())
      throw RegularityError("fibre metric singular on the distribution at a sampled state");
  }
}

Eigen::MatrixXd ConstrainedSystem::complement_at(const TangentState& state) const {
  int nn = n();
  int mm = m();
  Eigen::MatrixXd g = lagrangian_.hessian_uu(state);
  Eigen::MatrixXd A = d_basis_at(state.q);

  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(g * b); };

  // g-orthonormal basis of the distribution first.
  Eigen::MatrixXd ortho(nn, mm);
  for (int j = 0; j < mm; ++j) {
    Eigen::VectorXd w = A.col(j);
    for (int k = 0; k < j; ++k) w -= inner(ortho.col(k), w) * ortho.col(k);
    double nrm2 = inner(w, w);
    if (!(nrm2 > 0.0))
      throw RegularityError("fibre metric not positive on the distribution");
    ortho.col(j) = w / std::sqrt(nrm2);
  }

  Eigen::MatrixXd out(nn, nn - mm);
  int accepted = 0;
  for (int k = 0; k < nn && accepted < nn - mm; ++k) {
    Eigen::VectorXd w = Eigen::VectorXd::Unit(nn, k);
    double base = inner(w, w);
    for (int j = 0; j < mm; ++j) w -= inner(ortho.col(j), w) * ortho.col(j);
    for (int j = 0; j < accepted; ++j) w -= inner(out.col(j), w) * out.col(j);
    double nrm2 = inner(w, w);
    if (!(base > 0.0) || !(nrm2 > 0.0)) continue;
    if (std::sqrt(nrm2 / base) <= 1e-8) continue; // degenerate against the distribution
    out.col(accepted++) = w / std::sqrt(nrm2);
  }
  if (accepted != nn - mm)
    throw RegularityError("complement construction failed: no non-degenerate directions left");
  return out;
}

Eigen::MatrixXd ConstrainedSystem::frame_at(const TangentState& state) const {
  Eigen::MatrixXd F(n(), n());
  F.leftCols(m()) = d_basis_at(state.q);
  if (m() < n()) F.rightCols(n() - m()) = complement_at(state);
  return F;
}

Membership membership(const ConstrainedSystem& system, const TangentState& state, double tol) {
  validate_state(state, system.n());
  Membership out;
  out.tol = tol;
  out.v = quasi_velocities(system.frame_at(state), state.u);
  out.v_comp = out.v.tail(system.n() - system.m());
  out.on_c = out.v_comp.size() == 0 || out.v_comp.cwiseAbs().maxCoeff() <= tol;
  return out;
}

std::vector<TangentState> sample_states_on_c(const ConstrainedSystem& system,
                                             const SampleSpec& spec) {
  int n = system.n();
  int m = system.m();
  auto unit = halton_unit(spec.count, n + m, spec.seed);
  const DomainBox& box = system.box();
  std::vector<TangentState> out;
  out.reserve(unit.size());
  for (const auto& p : unit) {
    TangentState s;
    s.q = box.min.array() + p.head(n).array() * (box.max - box.min).array();
    Eigen::VectorXd v = 2.0 * p.tail(m).array() - 1.0; // coefficients in [-1, 1]
    s.u = system.d_basis_at(s.q) * v;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TangentState> sample_states_tq(const ConstrainedSystem& system,
                                           const SampleSpec& spec) {
  int n = system.n();
  auto unit = halton_unit(spec.count, 2 * n, spec.seed);
  const DomainBox& box = system.box();
  std::vector<TangentState> out;
  out.reserve(unit.size());
  for (const auto& p : unit) {
    TangentState s;
    s.q = box.min.array() + p.head(n).array() * (box.max - box.min).array();
    s.u = 2.0 * p.tail(n).array() - 1.0;
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::MatrixXd AdaptedFrame::tangent_basis() const {
  Eigen::MatrixXd T(2 * n, n + m);
  T.leftCols(m) = x_d;
  T.middleCols(m, n - m) = x_c;
  T.rightCols(m) = y_d;
  return T;
}

AdaptedFrame adapted_frame(const ConstrainedSystem& system, const TangentState& state,
                           double on_c_tol) {
  validate_state(state, system.n());
  Membership mem = membership(system, state, on_c_tol);
  if (!mem.on_c) throw PreconditionError("adapted_frame requires a state on the constraint set");

  int n = system.n();
  int m = system.m();
  const Lagrangian& L = system.lagrangian();

  AdaptedFrame f;
  f.n = n;
  f.m = m;

  Eigen::MatrixXd A = system.d_basis_at(state.q);
  Eigen::MatrixXd N = system.complement_at(state);
  ProjectorAt proj = projector_at(system.distribution(), state.q);

  auto tangency_defect = [&](const Eigen::VectorXd& base, const Eigen::VectorXd& vert) {
    return (proj.P * vert + proj.directional(base) * state.u).eval();
  };

  // Start from lifts: complete lifts of the distribution basis projected into
  // the tangent space of C along vertical directions; complement directions
  // get a vertical part solving the same tangency equations.
  f.x_d = Eigen::MatrixXd::Zero(2 * n, m);
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd base = A.col(j);
    Eigen::VectorXd vert =
        system.distribution().basis()[static_cast<std::size_t>(j)].jacobian_times(state.q, state.u);
    vert -= tangency_defect(base, vert);
    f.x_d.col(j).head(n) = base;
    f.x_d.col(j).tail(n) = vert;
  }
  f.x_c = Eigen::MatrixXd::Zero(2 * n, n - m);
  for (int j = 0; j < n - m; ++j) {
    Eigen::VectorXd base = N.col(j);
    Eigen::VectorXd vert = -tangency_defect(base, Eigen::VectorXd::Zero(n));
    f.x_c.col(j).head(n) = base;
    f.x_c.col(j).tail(n) = vert;
  }
  f.y_d = Eigen::MatrixXd::Zero(2 * n, m);
  f.y_d.bottomRows(n) = A;
  f.y_c = Eigen::MatrixXd::Zero(2 * n, n - m);
  f.y_c.bottomRows(n) = N;

  CartanSample cartan = cartan_forms(L, state);
  f.omega = cartan.omega;

  Eigen::MatrixXd frame_q(n, n);
  frame_q.leftCols(m) = A;
  frame_q.rightCols(n - m) = N;
  FibreMetricSample gm = hessian_metric(L, state, frame_q, m);
  f.g_dd = gm.g_dd;
  f.g_cc = gm.g_cc;

  Eigen::PartialPivLU<Eigen::MatrixXd> g_dd_lu(f.g_dd);

  // First correction: cancel omega(X_a, X_beta).
  if (n > m) {
    Eigen::MatrixXd W = f.x_c.transpose() * f.omega * f.x_d; // (n-m) x m
    f.x_c -= f.y_d * g_dd_lu.solve(W.transpose());
  }
  // Second correction: cancel omega(X_alpha, X_beta). Leaves the mixed block
  // untouched because g(X_beta, X_a) = 0.
  {
    Eigen::MatrixXd V = f.x_d.transpose() * f.omega * f.x_d; // m x m skew
    f.x_d -= 0.5 * f.y_d * g_dd_lu.solve(V.transpose());
  }

  f.omega_cc = f.x_c.transpose() * f.omega * f.x_c;

  Eigen::MatrixXd Phi(2 * n, 2 * n);
  Phi.leftCols(m) = f.x_d;
  Phi.middleCols(m, n - m) = f.x_c;
  Phi.middleCols(n, m) = f.y_d;
  Phi.rightCols(n - m) = f.y_c;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Phi);
  if (!lu.isInvertible()) throw RegularityError("adapted frame is singular");
  f.coframe = lu.inverse();

  return f;
}

PullbackBlocks pullback_omega(const AdaptedFrame& f) {
  int n = f.n;
  int m = f.m;
  PullbackBlocks out;
  out.g_dd = f.g_dd;
  out.omega_cc = f.omega_cc;

  Eigen::MatrixXd T = f.tangent_basis();
  Eigen::MatrixXd direct = T.transpose() * f.omega * T;

  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(n + m, n + m);
  blocks.block(0, n, m, m) = -f.g_dd.transpose();
  blocks.block(n, 0, m, m) = f.g_dd;
  blocks.block(m, m, n - m, n - m) = f.omega_cc;

  out.reconstruction_residual = (direct - blocks).cwiseAbs().maxCoeff();
  out.rank = 2 * m + numerical_rank(f.omega_cc);
  return out;
}

PullbackBlocks pullback_omega(const ConstrainedSystem& system, const TangentState& state) {
  return pullback_omega(adapted_frame(system, state));
}

Eigen::MatrixXd characteristic_kernel(const AdaptedFrame& frame, double rel_tol) {
  const Eigen::MatrixXd& W = frame.omega_cc;
  int k = static_cast<int>(W.rows());
  if (k == 0) return Eigen::MatrixXd::Zero(0, 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(W, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() > 0 ? sv(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (smax > 0.0 && sv(i) > rel_tol * smax) ++rank;
  return svd.matrixV().rightCols(k - rank);
}

Eigen::MatrixXd characteristic_kernel(const ConstrainedSystem& system,
                                      const TangentState& state) {
  return characteristic_kernel(adapted_frame(system, state));
}

} // namespace nhmech
