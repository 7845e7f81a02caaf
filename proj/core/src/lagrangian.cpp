#include "nhmech/lagrangian.hpp"

#include <Eigen/LU>

namespace nhmech {

Lagrangian Lagrangian::general(Expr expr, int n) {
  if (expr.empty()) throw Error(ErrorClass::Usage, "empty Lagrangian expression");
  if (expr.max_var_index() >= 2 * n)
    throw ScenarioError("Lagrangian uses variables outside the (q, u) table");
  Lagrangian L;
  L.n_ = n;
  L.mechanical_ = false;
  L.expr_ = expr;
  for (int i = 0; i < n; ++i) {
    L.dq_.push_back(expr.derivative(i));
    L.du_.push_back(expr.derivative(n + i));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      L.d2uu_.push_back(L.du_[static_cast<std::size_t>(i)].derivative(n + j));
      L.d2uq_.push_back(L.du_[static_cast<std::size_t>(i)].derivative(j));
    }
  return L;
}

Lagrangian Lagrangian::mechanical(std::vector<std::vector<Expr>> metric, Expr potential, int n) {
  if (static_cast<int>(metric.size()) != n)
    throw ScenarioError("mechanical metric must be n x n");
  Lagrangian L;
  L.n_ = n;
  L.mechanical_ = true;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(metric[static_cast<std::size_t>(i)].size()) != n)
      throw ScenarioError("mechanical metric must be n x n");
    for (int j = 0; j < n; ++j) {
      const Expr& e = metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (e.empty()) throw ScenarioError("empty metric entry");
      if (e.max_var_index() >= n)
        throw ScenarioError("metric entries must depend on coordinates only");
      L.metric_.push_back(e);
    }
  }
  if (potential.empty()) potential = Expr::constant(0.0);
  if (potential.max_var_index() >= n)
    throw ScenarioError("potential must depend on coordinates only");
  L.potential_ = potential;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        L.metric_dq_.push_back(
            L.metric_[static_cast<std::size_t>(i * n + j)].derivative(k));
  for (int k = 0; k < n; ++k) L.potential_dq_.push_back(potential.derivative(k));
  return L;
}

std::span<const double> Lagrangian::pack(const TangentState& s, std::vector<double>& buffer) const {
  buffer.resize(static_cast<std::size_t>(2 * n_));
  for (int i = 0; i < n_; ++i) {
    buffer[static_cast<std::size_t>(i)] = s.q[i];
    buffer[static_cast<std::size_t>(n_ + i)] = s.u[i];
  }
  return std::span<const double>(buffer.data(), buffer.size());
}

double Lagrangian::value(const TangentState& s) const {
  if (mechanical_) {
    Eigen::MatrixXd G = metric_at(s.q);
    return 0.5 * s.u.dot(G * s.u) - potential_at(s.q);
  }
  std::vector<double> buf;
  return expr_.evaluate(pack(s, buf));
}

Eigen::VectorXd Lagrangian::dq(const TangentState& s) const {
  Eigen::VectorXd out(n_);
  if (mechanical_) {
    auto dG = metric_derivatives(s.q);
    Eigen::VectorXd dphi = potential_gradient(s.q);
    for (int k = 0; k < n_; ++k) out[k] = 0.5 * s.u.dot(dG[static_cast<std::size_t>(k)] * s.u) - dphi[k];
    return out;
  }
  std::vector<double> buf;
  auto values = pack(s, buf);
  for (int i = 0; i < n_; ++i) out[i] = dq_[static_cast<std::size_t>(i)].evaluate(values);
  return out;
}

Eigen::VectorXd Lagrangian::du(const TangentState& s) const {
  if (mechanical_) return metric_at(s.q) * s.u;
  Eigen::VectorXd out(n_);
  std::vector<double> buf;
  auto values = pack(s, buf);
  for (int i = 0; i < n_; ++i) out[i] = du_[static_cast<std::size_t>(i)].evaluate(values);
  return out;
}

Eigen::MatrixXd Lagrangian::hessian_uu(const TangentState& s) const {
  if (mechanical_) return metric_at(s.q);
  Eigen::MatrixXd out(n_, n_);
  std::vector<double> buf;
  auto values = pack(s, buf);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      out(i, j) = d2uu_[static_cast<std::size_t>(i * n_ + j)].evaluate(values);
  return out;
}

Eigen::MatrixXd Lagrangian::hessian_uq(const TangentState& s) const {
  if (mechanical_) {
    auto dG = metric_derivatives(s.q);
    Eigen::MatrixXd out(n_, n_);
    for (int j = 0; j < n_; ++j) out.col(j) = dG[static_cast<std::size_t>(j)] * s.u;
    return out;
  }
  Eigen::MatrixXd out(n_, n_);
  std::vector<double> buf;
  auto values = pack(s, buf);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      out(i, j) = d2uq_[static_cast<std::size_t>(i * n_ + j)].evaluate(values);
  return out;
}

Eigen::MatrixXd Lagrangian::metric_at(const Eigen::VectorXd& q) const {
  if (!mechanical_) throw UnsupportedOperationError("metric_at requires a mechanical Lagrangian");
  Eigen::MatrixXd G(n_, n_);
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      G(i, j) = metric_[static_cast<std::size_t>(i * n_ + j)].evaluate(values);
  return G;
}

std::vector<Eigen::MatrixXd> Lagrangian::metric_derivatives(const Eigen::VectorXd& q) const {
  if (!mechanical_)
    throw UnsupportedOperationError("metric_derivatives requires a mechanical Lagrangian");
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(n_));
  for (int k = 0; k < n_; ++k) {
    Eigen::MatrixXd D(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        D(i, j) = metric_dq_[static_cast<std::size_t>((k * n_ + i) * n_ + j)].evaluate(values);
    out.push_back(std::move(D));
  }
  return out;
}

double Lagrangian::potential_at(const Eigen::VectorXd& q) const {
  if (!mechanical_) throw UnsupportedOperationError("potential_at requires a mechanical Lagrangian");
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  return potential_.evaluate(values);
}

Eigen::VectorXd Lagrangian::potential_gradient(const Eigen::VectorXd& q) const {
  if (!mechanical_)
    throw UnsupportedOperationError("potential_gradient requires a mechanical Lagrangian");
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  Eigen::VectorXd out(n_);
  for (int k = 0; k < n_; ++k) out[k] = potential_dq_[static_cast<std::size_t>(k)].evaluate(values);
  return out;
}

double vertical_lift_L(const Lagrangian& L, const VectorFieldQ& X, const TangentState& s) {
  return X.at(s.q).dot(L.du(s));
}

double complete_lift_L(const Lagrangian& L, const VectorFieldQ& X, const TangentState& s) {
  return X.at(s.q).dot(L.dq(s)) + X.jacobian_times(s.q, s.u).dot(L.du(s));
}

double energy(const Lagrangian& L, const TangentState& s) {
  return s.u.dot(L.du(s)) - L.value(s);
}

Eigen::VectorXd energy_differential(const Lagrangian& L, const TangentState& s) {
  int n = L.n();
  Eigen::VectorXd dE(2 * n);
  dE.head(n) = L.hessian_uq(s).transpose() * s.u - L.dq(s);
  dE.tail(n) = L.hessian_uu(s) * s.u;
  return dE;
}

CartanSample cartan_forms(const Lagrangian& L, const TangentState& s) {
  int n = L.n();
  CartanSample out;
  out.theta = Eigen::VectorXd::Zero(2 * n);
  out.theta.head(n) = L.du(s);
  Eigen::MatrixXd B = L.hessian_uq(s);
  Eigen::MatrixXd g = L.hessian_uu(s);
  out.omega = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  out.omega.topLeftCorner(n, n) = B.transpose() - B;
  out.omega.topRightCorner(n, n) = -g;
  out.omega.bottomLeftCorner(n, n) = g;
  return out;
}

FibreMetricSample hessian_metric(const Lagrangian& L, const TangentState& s,
                                 const Eigen::MatrixXd& frame_columns, int m) {
  int n = L.n();
  if (frame_columns.rows() != n || frame_columns.cols() != n)
    throw Error(ErrorClass::Usage, "hessian_metric needs a full n x n frame");
  FibreMetricSample out;
  out.g = L.hessian_uu(s);
  Eigen::MatrixXd full = frame_columns.transpose() * out.g * frame_columns;
  out.g_dd = full.topLeftCorner(m, m);
  out.g_cc = full.bottomRightCorner(n - m, n - m);
  out.g_cd = full.bottomLeftCorner(n - m, m);
  if (m > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(out.g_dd);
    if (!lu.isInvertible())
      throw RegularityError("fibre metric singular on the constraint distribution");
  }
  return out;
}

std::vector<Eigen::MatrixXd> christoffels(const Lagrangian& L, const Eigen::VectorXd& q) {
  int n = L.n();
  Eigen::MatrixXd G = L.metric_at(q);
  auto dG = L.metric_derivatives(q);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(G);
  std::vector<Eigen::MatrixXd> Gamma(static_cast<std::size_t>(n),
                                     Eigen::MatrixXd::Zero(n, n));
  // Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd rhs(n);
      for (int l = 0; l < n; ++l)
        rhs[l] = 0.5 * (dG[static_cast<std::size_t>(j)](l, k) +
                        dG[static_cast<std::size_t>(k)](l, j) -
                        dG[static_cast<std::size_t>(l)](j, k));
      Eigen::VectorXd col = lu.solve(rhs);
      for (int i = 0; i < n; ++i) Gamma[static_cast<std::size_t>(i)](j, k) = col[i];
    }
  return Gamma;
}

Eigen::VectorXd covariant_derivative(const Lagrangian& L, const VectorFieldQ& X,
                                     const VectorFieldQ& Y, const Eigen::VectorXd& q) {
  auto Gamma = christoffels(L, q);
  Eigen::VectorXd x = X.at(q);
  Eigen::VectorXd y = Y.at(q);
  Eigen::VectorXd out = Y.jacobian_at(q) * x;
  for (int i = 0; i < L.n(); ++i) out[i] += x.dot(Gamma[static_cast<std::size_t>(i)] * y);
  return out;
}

Eigen::VectorXd grad_potential(const Lagrangian& L, const Eigen::VectorXd& q) {
  Eigen::MatrixXd G = L.metric_at(q);
  return Eigen::PartialPivLU<Eigen::MatrixXd>(G).solve(L.potential_gradient(q));
}

} // namespace nhmech
