#include "nhmech/conservation.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

namespace nhmech {

namespace {

std::vector<double> pack_state(const TangentState& s) {
  int n = static_cast<int>(s.q.size());
  std::vector<double> out(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = s.q[i];
    out[static_cast<std::size_t>(n + i)] = s.u[i];
  }
  return out;
}

std::vector<Expr> scalar_gradient(const Expr& f, int vars) {
  std::vector<Expr> out;
  out.reserve(static_cast<std::size_t>(vars));
  for (int k = 0; k < vars; ++k) out.push_back(f.derivative(k));
  return out;
}

Eigen::VectorXd eval_gradient(const std::vector<Expr>& grads, std::span<const double> values) {
  Eigen::VectorXd out(static_cast<int>(grads.size()));
  for (int k = 0; k < out.size(); ++k)
    out[k] = grads[static_cast<std::size_t>(k)].evaluate(values);
  return out;
}

/// Component of b outside span(columns), infinity norm (Euclidean least
/// squares residual).
double outside_span(const Eigen::MatrixXd& columns, const Eigen::VectorXd& b) {
  if (columns.cols() == 0) return b.cwiseAbs().maxCoeff();
  Eigen::VectorXd coef = (columns.transpose() * columns)
                             .ldlt()
                             .solve(columns.transpose() * b);
  return (b - columns * coef).cwiseAbs().maxCoeff();
}

/// Flow derivative of the momentum Z^V(L) at a state with acceleration a.
double momentum_rate(const Lagrangian& L, const VectorFieldQ& Z, const TangentState& s,
                     const Eigen::VectorXd& a) {
  Eigen::VectorXd z = Z.at(s.q);
  Eigen::VectorXd p = L.du(s);
  Eigen::MatrixXd B = L.hessian_uq(s);
  Eigen::MatrixXd g = L.hessian_uu(s);
  return Z.jacobian_times(s.q, s.u).dot(p) + z.dot(B * s.u) + z.dot(g * a);
}

std::string two_imply_third(double r1, double r2, double r3, double tol) {
  const double rs[3] = {r1, r2, r3};
  bool applicable = false;
  for (int skip = 0; skip < 3; ++skip) {
    bool two = true;
    for (int i = 0; i < 3; ++i)
      if (i != skip && rs[i] > tol) two = false;
    if (two) {
      applicable = true;
      if (rs[skip] > 3.0 * tol) return "violated";
    }
  }
  return applicable ? "consistent" : "not_applicable";
}

} // namespace

// ---------------------------------------------------------------------------
// CTensor

CTensor::CTensor(int degree, int m, int n_coords, std::map<std::vector<int>, Expr> components,
                 std::optional<Expr> f, std::string name)
    : degree_(degree), m_(m), name_(std::move(name)), f_(std::move(f)) {
  if (degree_ < 2) throw ScenarioError("tensor degree must be at least 2");
  if (m_ < 1) throw ScenarioError("tensor needs a nonempty distribution index range");
  for (auto& [idx, e] : components) {
    if (static_cast<int>(idx.size()) != degree_)
      throw ScenarioError("tensor component index length does not match the degree");
    std::vector<int> key = idx;
    std::sort(key.begin(), key.end());
    if (key.front() < 0 || key.back() >= m_)
      throw ScenarioError("tensor component index out of range");
    if (e.empty()) throw ScenarioError("empty tensor component");
    if (e.max_var_index() >= n_coords)
      throw ScenarioError("tensor components must depend on coordinates only");
    auto [it, inserted] = components_.try_emplace(key, e);
    if (!inserted && !it->second.structurally_equal(e))
      throw ScenarioError("conflicting symmetric tensor components");
  }
  for (const auto& [key, e] : components_)
    gradients_.emplace(key, scalar_gradient(e, n_coords));
  if (f_) {
    if (f_->max_var_index() >= n_coords)
      throw ScenarioError("tensor companion scalar must depend on coordinates only");
    f_grad_ = scalar_gradient(*f_, n_coords);
  }
}

double CTensor::value(const Eigen::VectorXd& q, std::span<const int> index) const {
  std::vector<int> key(index.begin(), index.end());
  std::sort(key.begin(), key.end());
  auto it = components_.find(key);
  if (it == components_.end()) return 0.0;
  std::span<const double> vals(q.data(), static_cast<std::size_t>(q.size()));
  return it->second.evaluate(vals);
}

double CTensor::value_dq(const Eigen::VectorXd& q, std::span<const int> index, int k) const {
  std::vector<int> key(index.begin(), index.end());
  std::sort(key.begin(), key.end());
  auto it = gradients_.find(key);
  if (it == gradients_.end()) return 0.0;
  std::span<const double> vals(q.data(), static_cast<std::size_t>(q.size()));
  return it->second[static_cast<std::size_t>(k)].evaluate(vals);
}

double CTensor::f_value(const Eigen::VectorXd& q) const {
  if (!f_) return 0.0;
  std::span<const double> vals(q.data(), static_cast<std::size_t>(q.size()));
  return f_->evaluate(vals);
}

double CTensor::f_dq(const Eigen::VectorXd& q, int k) const {
  if (!f_) return 0.0;
  std::span<const double> vals(q.data(), static_cast<std::size_t>(q.size()));
  return f_grad_[static_cast<std::size_t>(k)].evaluate(vals);
}

double CTensor::quadratic_form(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const {
  std::vector<int> idx(static_cast<std::size_t>(degree_), 0);
  double acc = f_value(q);
  // iterate all m^k index tuples
  for (;;) {
    double term = value(q, idx);
    if (term != 0.0) {
      for (int d = 0; d < degree_; ++d) term *= v[idx[static_cast<std::size_t>(d)]];
      acc += term;
    }
    int d = degree_ - 1;
    while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == m_) idx[static_cast<std::size_t>(d--)] = 0;
    if (d < 0) break;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Z_f machinery

ZfSample z_f_field(const AdaptedFrame& f, const Eigen::VectorXd& df) {
  ZfSample out;
  Eigen::PartialPivLU<Eigen::MatrixXd> g_dd(f.g_dd);
  out.comp_yd = g_dd.solve(f.x_d.transpose() * df);
  out.comp_xd = -g_dd.solve(f.y_d.transpose() * df);
  out.z = f.y_d * out.comp_yd + f.x_d * out.comp_xd;

  double defect = 0.0;
  // omega(z, V) = z^T Omega V = (Omega^T z) . V
  Eigen::VectorXd wz = f.omega.transpose() * out.z;
  for (int j = 0; j < f.m; ++j) {
    defect = std::max(defect, std::abs(wz.dot(f.x_d.col(j)) - df.dot(f.x_d.col(j))));
    defect = std::max(defect, std::abs(wz.dot(f.y_d.col(j)) - df.dot(f.y_d.col(j))));
  }
  out.defect_residual = defect;
  return out;
}

ZfSample z_f_field(const ConstrainedSystem& system, const Expr& f, const TangentState& state) {
  AdaptedFrame frame = adapted_frame(system, state);
  auto grads = scalar_gradient(f, 2 * system.n());
  auto vals = pack_state(state);
  return z_f_field(frame, eval_gradient(grads, vals));
}

// ---------------------------------------------------------------------------
// Noether triple and the reaction annihilator

ConservationReport noether_triple(const ConstrainedSystem& system, const CandidateField& cand,
                                  const CheckOptions& options, const Trajectory* trajectory) {
  const Lagrangian& L = system.lagrangian();
  int n = system.n();
  auto states = sample_states_on_c(system, options.samples);
  ReportBuilder rb("noether_triple", cand.name, options.scenario, options.samples.count,
                   options.samples.seed);

  std::vector<Expr> gauge_grad;
  if (cand.gauge) gauge_grad = scalar_gradient(*cand.gauge, n);

  double max1 = 0.0, max2 = 0.0, max3 = 0.0;
  for (const auto& s : states) {
    DynamicsSample dyn = gamma_constrained(system, s);
    double fdot = 0.0;
    if (cand.gauge) {
      auto vals = pack_state(s);
      fdot = s.u.dot(eval_gradient(gauge_grad, vals));
    }
    double val1 = complete_lift_L(L, cand.Z, s) - fdot;
    Eigen::MatrixXd g = L.hessian_uu(s);
    double val2 = (dyn.a - dyn.a0).dot(g * cand.Z.at(s.q));
    double val3 = momentum_rate(L, cand.Z, s, dyn.a) - fdot;

    rb.residual("complete_lift", val1, options.tol);
    rb.residual("reaction", val2, options.tol);
    rb.residual("momentum_rate", val3, options.tol);
    rb.residual("linear_identity", val3 - val1 - val2, 1e-12);
    max1 = std::max(max1, std::abs(val1));
    max2 = std::max(max2, std::abs(val2));
    max3 = std::max(max3, std::abs(val3));
  }
  rb.note("two_imply_third", two_imply_third(max1, max2, max3, options.tol));

  if (trajectory && max1 <= options.tol && max2 <= options.tol &&
      !trajectory->samples.empty()) {
    auto momentum = [&](const TrajectorySample& ts) {
      TangentState s{ts.q, ts.u};
      double p = vertical_lift_L(L, cand.Z, s);
      if (cand.gauge) {
        std::span<const double> qv(ts.q.data(), static_cast<std::size_t>(ts.q.size()));
        p -= cand.gauge->evaluate(qv);
      }
      return p;
    };
    double first = momentum(trajectory->samples.front());
    double drift = 0.0;
    for (const auto& ts : trajectory->samples)
      drift = std::max(drift, std::abs(momentum(ts) - first));
    rb.drift("momentum", first, drift, options.drift_tol);
  }
  return rb.finish();
}

ConservationReport reaction_annihilator_test(const ConstrainedSystem& system,
                                             const CandidateField& cand,
                                             const CheckOptions& options) {
  auto states = sample_states_on_c(system, options.samples);
  ReportBuilder rb("reaction_annihilator", cand.name, options.scenario, options.samples.count,
                   options.samples.seed);
  double in_d = 0.0;
  for (const auto& s : states) {
    DynamicsSample dyn = gamma_constrained(system, s);
    Eigen::MatrixXd g = system.lagrangian().hessian_uu(s);
    double eps = (dyn.a - dyn.a0).dot(g * cand.Z.at(s.q));
    rb.residual("reaction", eps, options.tol);
    in_d = std::max(in_d, outside_span(system.d_basis_at(s.q), cand.Z.at(s.q)));
  }
  rb.note("z_in_distribution", in_d <= 1e-10 ? "true" : "false");
  if (in_d <= 1e-10)
    rb.note("vacuous", "field lies in the distribution; the reaction annihilates it identically");
  return rb.finish();
}

// ---------------------------------------------------------------------------
// First integrals through the Cartan form

ConservationReport thm_int_check(const ConstrainedSystem& system, const Expr& f,
                                 const std::string& f_name, const CheckOptions& options) {
  int n = system.n();
  auto states = sample_states_on_c(system, options.samples);
  ReportBuilder rb("first_integral", f_name, options.scenario, options.samples.count,
                   options.samples.seed);
  auto grads = scalar_gradient(f, 2 * n);
  for (const auto& s : states) {
    AdaptedFrame frame = adapted_frame(system, s);
    DynamicsSample dyn = gamma_constrained(system, s);
    auto vals = pack_state(s);
    Eigen::VectorXd df = eval_gradient(grads, vals);
    ZfSample zf = z_f_field(frame, df);
    double gamma_f = df.head(n).dot(s.u) + df.tail(n).dot(dyn.a);
    double zf_energy = zf.z.dot(energy_differential(system.lagrangian(), s));
    rb.residual("gamma_f", gamma_f, options.tol);
    rb.residual("zf_energy", zf_energy, options.tol);
    rb.residual("identity", gamma_f - zf_energy, 1e-9);
    rb.residual("zf_defect", zf.defect_residual, 1e-9);
  }
  return rb.finish();
}

ConservationReport symmetry_pairing(const ConstrainedSystem& system, const Expr& f1,
                                    const Expr& f2, const CheckOptions& options) {
  int n = system.n();
  auto states = sample_states_on_c(system, options.samples);
  ReportBuilder rb("symmetry_pairing", "pair", options.scenario, options.samples.count,
                   options.samples.seed);
  auto g1 = scalar_gradient(f1, 2 * n);
  auto g2 = scalar_gradient(f2, 2 * n);
  for (const auto& s : states) {
    AdaptedFrame frame = adapted_frame(system, s);
    auto vals = pack_state(s);
    Eigen::VectorXd df1 = eval_gradient(g1, vals);
    Eigen::VectorXd df2 = eval_gradient(g2, vals);
    ZfSample z1 = z_f_field(frame, df1);
    ZfSample z2 = z_f_field(frame, df2);
    double p12 = z1.z.dot(df2);
    double p21 = z2.z.dot(df1);
    double w = z2.z.dot(frame.omega * z1.z); // omega(Z2, Z1)
    rb.residual("antisymmetry", p12 + p21, options.tol);
    rb.residual("pairing_form", p12 - w, options.tol);
    rb.residual("zf_defect", std::max(z1.defect_residual, z2.defect_residual), 1e-9);
  }
  return rb.finish();
}

// ---------------------------------------------------------------------------
// Quasi-symmetries

ConservationReport quasi_symmetry_check(const ConstrainedSystem& system,
                                        const CandidateField& cand,
                                        const CheckOptions& options) {
  const Lagrangian& L = system.lagrangian();
  int n = system.n();
  int m = system.m();
  ReportBuilder rb("quasi_symmetry", cand.name, options.scenario, options.samples.count,
                   options.samples.seed);

  std::vector<Expr> gauge_grad;
  if (cand.gauge) gauge_grad = scalar_gradient(*cand.gauge, n);
  auto fdot_at = [&](const TangentState& s) {
    if (!cand.gauge) return 0.0;
    auto vals = pack_state(s);
    return s.u.dot(eval_gradient(gauge_grad, vals));
  };
  auto y_of_f = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& y) {
    if (!cand.gauge) return 0.0;
    std::span<const double> qv(q.data(), static_cast<std::size_t>(q.size()));
    return y.dot(eval_gradient(gauge_grad, qv));
  };

  // Symbolic brackets with the distribution basis, and a spanning set of the
  // first derived distribution.
  std::vector<VectorFieldQ> z_brackets;
  for (int a = 0; a < m; ++a)
    z_brackets.push_back(
        lie_bracket_field(cand.Z, system.distribution().basis()[static_cast<std::size_t>(a)]));
  std::vector<VectorFieldQ> d1_span = system.distribution().basis();
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      d1_span.push_back(lie_bracket_field(system.distribution().basis()[static_cast<std::size_t>(a)],
                                          system.distribution().basis()[static_cast<std::size_t>(b)]));

  auto on_c = sample_states_on_c(system, options.samples);
  for (const auto& s : on_c) {
    Eigen::MatrixXd A = system.d_basis_at(s.q);
    for (const auto& br : z_brackets)
      rb.residual("distribution_symmetry", outside_span(A, br.at(s.q)), options.tol);
    rb.residual("z_in_distribution", outside_span(A, cand.Z.at(s.q)), options.tol);
    rb.residual("quasi_invariance_c", complete_lift_L(L, cand.Z, s) - fdot_at(s), options.tol);

    // Y^V(Z^C(L)) = Y . (B z) + p . (JZ y) + y . g (JZ u) against Y(F).
    Eigen::VectorXd z = cand.Z.at(s.q);
    Eigen::MatrixXd JZ = cand.Z.jacobian_at(s.q);
    Eigen::VectorXd p = L.du(s);
    Eigen::MatrixXd B = L.hessian_uq(s);
    Eigen::MatrixXd g = L.hessian_uu(s);
    for (const auto& Yf : d1_span) {
      Eigen::VectorXd y = Yf.at(s.q);
      double lhs = y.dot(B * z) + p.dot(JZ * y) + y.dot(g * (JZ * s.u));
      rb.residual("d1_compatibility", lhs - y_of_f(s.q, y), options.tol);
    }
  }

  SampleSpec off_spec = options.samples;
  off_spec.seed = options.samples.seed + 1;
  for (const auto& s : sample_states_tq(system, off_spec))
    rb.residual("quasi_invariance_tq", complete_lift_L(L, cand.Z, s) - fdot_at(s), options.tol);

  ConservationReport report = rb.finish();
  auto ok = [&](const char* name) {
    auto it = report.conditions.find(name);
    return it != report.conditions.end() && it->second.pass();
  };
  report.notes["strong_verdict"] = (ok("distribution_symmetry") && ok("z_in_distribution") &&
                                    ok("quasi_invariance_tq"))
                                       ? "pass"
                                       : "fail";
  report.notes["weak_verdict"] = (ok("distribution_symmetry") && ok("z_in_distribution") &&
                                  ok("quasi_invariance_c") && ok("d1_compatibility"))
                                     ? "pass"
                                     : "fail";
  return report;
}

// ---------------------------------------------------------------------------
// Mechanical-type machinery

Eigen::MatrixXd killing_restricted(const ConstrainedSystem& system, const VectorFieldQ& Z,
                                   const Eigen::VectorXd& q) {
  const Lagrangian& L = system.lagrangian();
  Eigen::MatrixXd G = L.metric_at(q);
  auto Gamma = christoffels(L, q);
  Eigen::MatrixXd A = system.d_basis_at(q);
  int m = system.m();

  Eigen::MatrixXd JZ = Z.jacobian_at(q);
  Eigen::VectorXd z = Z.at(q);
  Eigen::MatrixXd K(m, m);
  for (int a = 0; a < m; ++a) {
    Eigen::VectorXd dir = A.col(a);
    Eigen::VectorXd nabla = JZ * dir;
    for (int i = 0; i < L.n(); ++i) nabla[i] += dir.dot(Gamma[static_cast<std::size_t>(i)] * z);
    for (int b = 0; b < m; ++b) K(a, b) = nabla.dot(G * A.col(b));
  }
  return K + K.transpose();
}

SecondFundamentalForm second_fundamental_form(const ConstrainedSystem& system,
                                              const Eigen::VectorXd& q) {
  const Lagrangian& L = system.lagrangian();
  int n = system.n();
  int m = system.m();
  Eigen::MatrixXd G = L.metric_at(q);
  auto Gamma = christoffels(L, q);
  Eigen::MatrixXd A = system.d_basis_at(q);
  TangentState base{q, Eigen::VectorXd::Zero(n)};
  Eigen::MatrixXd N = system.complement_at(base);

  auto nabla = [&](int a, int b) {
    const auto& Xb = system.distribution().basis()[static_cast<std::size_t>(b)];
    Eigen::VectorXd out = Xb.jacobian_at(q) * A.col(a);
    for (int i = 0; i < n; ++i) out[i] += A.col(a).dot(Gamma[static_cast<std::size_t>(i)] * A.col(b));
    return out;
  };

  SecondFundamentalForm out;
  out.complement = N;
  out.comps.assign(static_cast<std::size_t>(n - m), Eigen::MatrixXd::Zero(m, m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      Eigen::VectorXd sym = 0.5 * (nabla(a, b) + nabla(b, a));
      for (int c = 0; c < n - m; ++c)
        out.comps[static_cast<std::size_t>(c)](a, b) = N.col(c).dot(G * sym);
    }
  return out;
}

Eigen::VectorXd SecondFundamentalForm::vector(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(complement.rows());
  for (std::size_t c = 0; c < comps.size(); ++c)
    out += v.dot(comps[c] * v) * complement.col(static_cast<int>(c));
  return out;
}

InducedConnection induced_connection(const ConstrainedSystem& system, const Eigen::VectorXd& q) {
  const Lagrangian& L = system.lagrangian();
  int n = system.n();
  int m = system.m();
  auto Gamma = christoffels(L, q);
  TangentState base{q, Eigen::VectorXd::Zero(n)};
  Eigen::MatrixXd F = system.frame_at(base);
  Eigen::PartialPivLU<Eigen::MatrixXd> flu(F);

  InducedConnection out;
  out.frame = F;
  out.coeff.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(m, m));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd dir = F.col(i);
    for (int a = 0; a < m; ++a) {
      const auto& Xa = system.distribution().basis()[static_cast<std::size_t>(a)];
      Eigen::VectorXd nab = Xa.jacobian_at(q) * dir;
      for (int r = 0; r < n; ++r) nab[r] += dir.dot(Gamma[static_cast<std::size_t>(r)] * Xa.at(q));
      Eigen::VectorXd xi = flu.solve(nab);
      out.coeff[static_cast<std::size_t>(i)].col(a) = xi.head(m);
    }
  }
  return out;
}

namespace {

/// Average of T over all orderings of a (k+1)-index tuple; T is called with
/// the first index as the derivative direction.
double symmetrized(const std::function<double(std::span<const int>)>& T,
                   std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  double acc = 0.0;
  long count = 0;
  do {
    acc += T(indices);
    ++count;
  } while (std::next_permutation(indices.begin(), indices.end()));
  return acc / static_cast<double>(count);
}

/// All non-decreasing index tuples of the given length over [0, m).
std::vector<std::vector<int>> index_combinations(int length, int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> idx(static_cast<std::size_t>(length), 0);
  for (;;) {
    out.push_back(idx);
    int d = length - 1;
    while (d >= 0) {
      if (++idx[static_cast<std::size_t>(d)] < m) {
        for (int e = d + 1; e < length; ++e)
          idx[static_cast<std::size_t>(e)] = idx[static_cast<std::size_t>(d)];
        break;
      }
      --d;
    }
    if (d < 0) break;
  }
  return out;
}

Eigen::VectorXd projected_gradient_d(const ConstrainedSystem& system, const Eigen::VectorXd& q,
                                     const Eigen::MatrixXd& A) {
  // (grad phi)^beta = g^{alpha beta} X_beta(phi) on the distribution block.
  Eigen::MatrixXd G = system.lagrangian().metric_at(q);
  Eigen::VectorXd dphi = system.lagrangian().potential_gradient(q);
  Eigen::MatrixXd g_dd = A.transpose() * G * A;
  return Eigen::PartialPivLU<Eigen::MatrixXd>(g_dd).solve(A.transpose() * dphi);
}

void tensor_trajectory_drift(ReportBuilder& rb, const CTensor& A, const Trajectory* trajectory,
                             int m, double drift_tol, const char* name) {
  if (!trajectory || trajectory->samples.empty()) return;
  auto value = [&](const TrajectorySample& ts) {
    return A.quadratic_form(ts.q, ts.v.head(m));
  };
  double first = value(trajectory->samples.front());
  double drift = 0.0;
  for (const auto& ts : trajectory->samples)
    drift = std::max(drift, std::abs(value(ts) - first));
  rb.drift(name, first, drift, drift_tol);
}

} // namespace

ConservationReport quadratic_integral_check(const ConstrainedSystem& system, const CTensor& A,
                                            const CheckOptions& options,
                                            const Trajectory* trajectory) {
  if (!system.lagrangian().is_mechanical())
    throw UnsupportedOperationError("quadratic_integral_check requires a mechanical Lagrangian");
  if (A.degree() != 2)
    throw Error(ErrorClass::Usage, "quadratic_integral_check expects a degree-2 tensor");
  int m = system.m();
  ReportBuilder rb("quadratic_integral", A.name(), options.scenario, options.samples.count,
                   options.samples.seed);

  auto points = sample_points(system.box(), options.samples);
  auto combos = index_combinations(3, m);
  bool all_pass = true;
  for (const auto& q : points) {
    InducedConnection conn = induced_connection(system, q);
    Eigen::MatrixXd Amat(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        int idx[2] = {a, b};
        Amat(a, b) = A.value(q, idx);
      }
    Eigen::MatrixXd Adual = system.d_basis_at(q);

    auto nabla_bar = [&](std::span<const int> i) {
      // i[0] is the direction; X_alpha(A_bc) - A_dc Gb^d_{ab} - A_bd Gb^d_{ac}
      int al = i[0], be = i[1], ga = i[2];
      double dir = 0.0;
      for (int k = 0; k < system.n(); ++k) {
        int idx[2] = {be, ga};
        dir += Adual(k, al) * A.value_dq(q, idx, k);
      }
      const Eigen::MatrixXd& Gb = conn.coeff[static_cast<std::size_t>(al)];
      for (int d = 0; d < m; ++d) dir -= Amat(d, ga) * Gb(d, be) + Amat(be, d) * Gb(d, ga);
      return dir;
    };
    for (const auto& combo : combos) {
      double r = symmetrized(nabla_bar, combo);
      rb.residual("parallel", r, options.tol);
      if (std::abs(r) > options.tol) all_pass = false;
    }

    Eigen::VectorXd gphi = projected_gradient_d(system, q, Adual);
    for (int a = 0; a < m; ++a) {
      double xf = 0.0;
      for (int k = 0; k < system.n(); ++k) xf += Adual(k, a) * A.f_dq(q, k);
      double r = xf - 2.0 * Amat.row(a).dot(gphi);
      rb.residual("potential", r, options.tol);
      if (std::abs(r) > options.tol) all_pass = false;
    }
  }
  if (all_pass) tensor_trajectory_drift(rb, A, trajectory, m, options.drift_tol, "quadratic_form");
  return rb.finish();
}

ConservationReport restricted_tensor_check(const ConstrainedSystem& system, const QTensor& A,
                                           const CheckOptions& options,
                                           const Trajectory* trajectory) {
  if (!system.lagrangian().is_mechanical())
    throw UnsupportedOperationError("restricted_tensor_check requires a mechanical Lagrangian");
  int n = system.n();
  int m = system.m();
  if (static_cast<int>(A.components.size()) != n)
    throw Error(ErrorClass::Usage, "restricted tensor must be n x n");
  ReportBuilder rb("restricted_tensor", A.name, options.scenario, options.samples.count,
                   options.samples.seed);

  // Symbolic coordinate gradients of the tensor entries.
  std::vector<std::vector<std::vector<Expr>>> dA(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(A.components[static_cast<std::size_t>(i)].size()) != n)
      throw Error(ErrorClass::Usage, "restricted tensor must be n x n");
    dA[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      dA[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          scalar_gradient(A.components[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], n);
  }
  std::vector<Expr> f_grad;
  if (A.f) f_grad = scalar_gradient(*A.f, n);

  auto points = sample_points(system.box(), options.samples);
  auto combos = index_combinations(3, m);
  for (const auto& q : points) {
    std::span<const double> qv(q.data(), static_cast<std::size_t>(q.size()));
    Eigen::MatrixXd Acoord(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        Acoord(i, j) =
            A.components[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].evaluate(qv);

    auto Gamma = christoffels(system.lagrangian(), q);
    Eigen::MatrixXd basis = system.d_basis_at(q);
    TangentState base{q, Eigen::VectorXd::Zero(n)};
    Eigen::MatrixXd N = system.complement_at(base);
    SecondFundamentalForm pi = second_fundamental_form(system, q);

    // nabla_i A_jk in coordinates.
    std::vector<Eigen::MatrixXd> nablaA(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd M(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          double v = dA[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                         [static_cast<std::size_t>(i)]
                             .evaluate(qv);
          for (int l = 0; l < n; ++l)
            v -= Gamma[static_cast<std::size_t>(l)](i, j) * Acoord(l, k) +
                 Gamma[static_cast<std::size_t>(l)](i, k) * Acoord(j, l);
          M(j, k) = v;
        }
      nablaA[static_cast<std::size_t>(i)] = std::move(M);
    }

    Eigen::MatrixXd A_dd = basis.transpose() * Acoord * basis; // m x m
    Eigen::MatrixXd A_cd = N.transpose() * Acoord * basis;     // (n-m) x m

    auto nabla_frame = [&](std::span<const int> i) {
      double acc = 0.0;
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s)
          for (int t = 0; t < n; ++t)
            acc += basis(r, i[0]) * basis(s, i[1]) * basis(t, i[2]) *
                   nablaA[static_cast<std::size_t>(r)](s, t);
      return acc;
    };
    auto pi_term = [&](std::span<const int> i) {
      double acc = 0.0;
      for (int c = 0; c < n - m; ++c)
        acc += A_cd(c, i[0]) * pi.comps[static_cast<std::size_t>(c)](i[1], i[2]);
      return acc;
    };

    for (const auto& combo : combos) {
      double np = symmetrized(nabla_frame, combo) + symmetrized(pi_term, combo);
      double pt = symmetrized(pi_term, combo);
      rb.residual("parallel_pi", np, options.tol);
      rb.residual("pi_orthogonality", pt, options.tol);
    }

    Eigen::VectorXd dphi = system.lagrangian().potential_gradient(q);
    Eigen::VectorXd gphi_d = projected_gradient_d(system, q, basis);
    Eigen::VectorXd gphi_c = N.transpose() * dphi; // complement components, g-orthonormal N
    for (int a = 0; a < m; ++a) {
      rb.residual("normal_gradient", A_cd.col(a).dot(gphi_c), options.tol);
      double xf = 0.0;
      if (A.f)
        for (int k = 0; k < n; ++k) xf += basis(k, a) * f_grad[static_cast<std::size_t>(k)].evaluate(qv);
      rb.residual("potential", xf - 2.0 * A_dd.row(a).dot(gphi_d), options.tol);
    }
  }

  if (trajectory && !trajectory->samples.empty()) {
    auto value = [&](const TrajectorySample& ts) {
      std::span<const double> qv(ts.q.data(), static_cast<std::size_t>(ts.q.size()));
      Eigen::MatrixXd Acoord(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          Acoord(i, j) =
              A.components[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].evaluate(qv);
      double v = ts.u.dot(Acoord * ts.u);
      if (A.f) v += A.f->evaluate(qv);
      return v;
    };
    double first = value(trajectory->samples.front());
    double drift = 0.0;
    for (const auto& ts : trajectory->samples)
      drift = std::max(drift, std::abs(value(ts) - first));
    rb.drift("quadratic_form", first, drift, options.drift_tol);
  }
  return rb.finish();
}

ConservationReport higher_degree_check(const ConstrainedSystem& system, const CTensor& A,
                                       const CheckOptions& options,
                                       const Trajectory* trajectory) {
  if (!system.lagrangian().is_mechanical())
    throw UnsupportedOperationError("higher_degree_check requires a mechanical Lagrangian");
  int m = system.m();
  int k = A.degree();
  ReportBuilder rb("higher_degree_integral", A.name(), options.scenario, options.samples.count,
                   options.samples.seed);

  auto points = sample_points(system.box(), options.samples);
  auto combos = index_combinations(k + 1, m);
  auto value_combos = index_combinations(k - 1, m);
  bool all_pass = true;
  for (const auto& q : points) {
    InducedConnection conn = induced_connection(system, q);
    Eigen::MatrixXd Adual = system.d_basis_at(q);

    auto nabla_bar = [&](std::span<const int> idx) {
      int al = idx[0];
      std::vector<int> rest(idx.begin() + 1, idx.end());
      double acc = 0.0;
      for (int c = 0; c < system.n(); ++c) acc += Adual(c, al) * A.value_dq(q, rest, c);
      const Eigen::MatrixXd& Gb = conn.coeff[static_cast<std::size_t>(al)];
      for (std::size_t slot = 0; slot < rest.size(); ++slot) {
        std::vector<int> swapped = rest;
        for (int d = 0; d < m; ++d) {
          swapped[slot] = d;
          acc -= A.value(q, swapped) * Gb(d, rest[slot]);
        }
        swapped[slot] = rest[slot];
      }
      return acc;
    };
    for (const auto& combo : combos) {
      double r = symmetrized(nabla_bar, combo);
      rb.residual("parallel", r, options.tol);
      if (std::abs(r) > options.tol) all_pass = false;
    }

    for (int a = 0; a < m; ++a) {
      double xf = 0.0;
      for (int c = 0; c < system.n(); ++c) xf += Adual(c, a) * A.f_dq(q, c);
      rb.residual("f_invariance", xf, options.tol);
      if (std::abs(xf) > options.tol) all_pass = false;
    }

    Eigen::VectorXd gphi = projected_gradient_d(system, q, Adual);
    for (const auto& head : value_combos) {
      double acc = 0.0;
      std::vector<int> idx(head.begin(), head.end());
      idx.push_back(0);
      for (int d = 0; d < m; ++d) {
        idx.back() = d;
        acc += A.value(q, idx) * gphi[d];
      }
      rb.residual("gradient_orthogonality", acc, options.tol);
      if (std::abs(acc) > options.tol) all_pass = false;
    }
  }
  if (all_pass) tensor_trajectory_drift(rb, A, trajectory, m, options.drift_tol, "integral_form");
  return rb.finish();
}

// ---------------------------------------------------------------------------
// Generalized triple on the constraint submanifold

ConservationReport newfasso_check(const ConstrainedSystem& system, const TangentFieldOnC& Z,
                                  const std::string& z_name, const Expr& f,
                                  const CheckOptions& options) {
  int n = system.n();
  int m = system.m();
  auto states = sample_states_on_c(system, options.samples);
  ReportBuilder rb("generalized_triple", z_name, options.scenario, options.samples.count,
                   options.samples.seed);
  auto grads = scalar_gradient(f, 2 * n);

  double max1 = 0.0, max2 = 0.0, max3 = 0.0;
  for (const auto& s : states) {
    AdaptedFrame frame = adapted_frame(system, s);
    DynamicsSample dyn = gamma_constrained(system, s);
    auto vals = pack_state(s);
    Eigen::VectorXd df = eval_gradient(grads, vals);

    Eigen::VectorXd comps = Z(s, frame);
    if (comps.size() != n + m)
      throw Error(ErrorClass::Usage, "tangent field must supply n + m frame components");
    Eigen::VectorXd z = frame.x_d * comps.head(m) + frame.x_c * comps.segment(m, n - m) +
                        frame.y_d * comps.tail(m);

    Eigen::VectorXd wz = frame.omega.transpose() * z;
    double defect = 0.0;
    for (int j = 0; j < m; ++j) {
      defect = std::max(defect, std::abs((wz - df).dot(frame.x_d.col(j))));
      defect = std::max(defect, std::abs((wz - df).dot(frame.y_d.col(j))));
    }
    double scale = 1.0 + df.cwiseAbs().maxCoeff();
    if (defect > 1e-9 * scale)
      throw PreconditionError("tangent field does not match df on the lifted distribution");

    double t1 = df.head(n).dot(s.u) + df.tail(n).dot(dyn.a); // Gamma(f)
    double t2 = z.dot(energy_differential(system.lagrangian(), s));
    Eigen::MatrixXd g = system.lagrangian().hessian_uu(s);
    double t3 = (dyn.a - dyn.a0).dot(g * z.head(n)); // iota* epsilon(Z)

    rb.residual("identity", t1 - t2 + t3, options.tol);
    max1 = std::max(max1, std::abs(t1));
    max2 = std::max(max2, std::abs(t2));
    max3 = std::max(max3, std::abs(t3));
  }
  rb.note("two_imply_third", two_imply_third(max1, max2, max3, options.tol));
  return rb.finish();
}

} // namespace nhmech
