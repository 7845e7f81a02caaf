#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "nhmech/conservation.hpp"
#include "nhmech/scenario.hpp"

using namespace nhmech;
using nhtest::make_field;
using nhtest::particle_system;
using nhtest::qu_table;
using nhtest::vec3;

namespace {

CheckOptions small_opts(int count = 64, unsigned seed = 5) {
  CheckOptions o;
  o.samples = {count, seed};
  o.scenario = "test";
  return o;
}

} // namespace

TEST_CASE("noether triple on the particle") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);

  Trajectory traj = integrate(sys, {vec3(0, 1, 0), vec3(1, 1, 1)}, 5.0, 1e-3);

  // Z = (0,1,0): in the distribution, complete lift kills L, so u_y conserved
  CandidateField zy{make_field({"0", "1", "0"}, t), {}, "Z_y"};
  ConservationReport good = noether_triple(sys, zy, small_opts(), &traj);
  CHECK(good.pass());
  CHECK(good.conditions.at("complete_lift").max_residual <= 1e-12);
  CHECK(good.conditions.at("reaction").max_residual <= 1e-12);
  CHECK(good.conditions.at("momentum_rate").max_residual <= 1e-12);
  CHECK(good.drifts.at("momentum").max_drift <= 1e-8);
  CHECK(good.notes.at("two_imply_third") == "consistent");

  // Z = (1,0,0): lift vanishes but the reaction does not, u_x not conserved
  CandidateField zx{make_field({"1", "0", "0"}, t), {}, "Z_x"};
  ConservationReport bad = noether_triple(sys, zx, small_opts(), &traj);
  CHECK(!bad.pass());
  CHECK(bad.conditions.at("complete_lift").max_residual <= 1e-12);
  CHECK(bad.conditions.at("reaction").max_residual > 1e-3);
  CHECK(bad.conditions.at("linear_identity").max_residual <= 1e-12);

  // unconstrained free particle: every constant field passes identically
  SymbolTable t2 = qu_table(2);
  std::vector<std::vector<Expr>> metric(2, std::vector<Expr>(2, Expr::constant(0.0)));
  for (int i = 0; i < 2; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  std::vector<VectorFieldQ> full;
  full.push_back(make_field({"1", "0"}, t2));
  full.push_back(make_field({"0", "1"}, t2));
  ConstrainedSystem unconstrained(
      Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), 2),
      DistributionD(std::move(full), nhtest::box_n(2)));
  CandidateField zc{make_field({"3", "-2"}, t2), {}, "Z_c"};
  CHECK(noether_triple(unconstrained, zc, small_opts()).pass());
}

TEST_CASE("noether linear identity holds for random fields and states") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> c(-1.5, 1.5);

  auto states = sample_states_on_c(sys, SampleSpec{50, 77});
  int pairs = 0;
  while (pairs < 1000) {
    // random affine field
    std::vector<Expr> comps;
    for (int i = 0; i < 3; ++i) {
      Expr e = Expr::constant(c(rng));
      for (int j = 0; j < 3; ++j)
        e = e + Expr::constant(c(rng)) * Expr::variable(j, t.name(j));
      comps.push_back(e);
    }
    CandidateField z{VectorFieldQ(std::move(comps), 3), {}, "random"};
    CheckOptions o = small_opts(1, static_cast<unsigned>(pairs));
    const auto& s = states[static_cast<std::size_t>(pairs) % states.size()];
    // evaluate the identity directly at one state
    DynamicsSample dyn = gamma_constrained(sys, s);
    const Lagrangian& L = sys.lagrangian();
    double val1 = complete_lift_L(L, z.Z, s);
    double val2 = (dyn.a - dyn.a0).dot(L.hessian_uu(s) * z.Z.at(s.q));
    Eigen::VectorXd p = L.du(s);
    double val3 = z.Z.jacobian_times(s.q, s.u).dot(p) + z.Z.at(s.q).dot(L.hessian_uq(s) * s.u) +
                  z.Z.at(s.q).dot(L.hessian_uu(s) * dyn.a);
    CHECK(std::abs(val3 - val1 - val2) <= 1e-12);
    (void)o;
    ++pairs;
  }
}

TEST_CASE("gauge variant of the triple") {
  // Magnetic-type Lagrangian: L = |u|^2/2 + q_2 u_1 on an unconstrained
  // 2-dimensional system. Z = d/dq_2 has Z^C(L) = u_1 = d/dt(q_1), so the
  // gauge F = q_1 makes the triple pass and Z^V(L) - F is conserved.
  SymbolTable t = qu_table(2);
  Lagrangian L = Lagrangian::general(parse("0.5*(u_1^2+u_2^2)+q_2*u_1", t), 2);
  std::vector<VectorFieldQ> full;
  full.push_back(make_field({"1", "0"}, t));
  full.push_back(make_field({"0", "1"}, t));
  ConstrainedSystem sys(std::move(L), DistributionD(std::move(full), nhtest::box_n(2)));

  CandidateField ungauged{make_field({"0", "1"}, t), {}, "Z"};
  CHECK(!noether_triple(sys, ungauged, small_opts()).pass());

  CandidateField gauged{make_field({"0", "1"}, t), parse("q_1", t), "Z_gauged"};
  Eigen::VectorXd q0(2), u0(2);
  q0 << 0.0, 0.0;
  u0 << 0.3, -0.4;
  Trajectory traj = integrate(sys, {q0, u0}, 5.0, 1e-3);
  ConservationReport rep = noether_triple(sys, gauged, small_opts(), &traj);
  CHECK(rep.pass());
  CHECK(rep.drifts.at("momentum").max_drift <= 1e-8);
}

TEST_CASE("reaction annihilator distribution") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);

  // inside the distribution: vacuous
  CandidateField zin{make_field({"1", "0", "q_2"}, t), {}, "Z_in"};
  ConservationReport vac = reaction_annihilator_test(sys, zin, small_opts());
  CHECK(vac.pass());
  CHECK(vac.notes.at("z_in_distribution") == "true");

  // normal field: epsilon = u_x u_y, generically nonzero
  CandidateField zn{make_field({"-q_2", "0", "1"}, t), {}, "Z_n"};
  ConservationReport rep = reaction_annihilator_test(sys, zn, small_opts());
  CHECK(!rep.pass());
  CHECK(rep.notes.at("z_in_distribution") == "false");

  // vertical rolling disk: the roll direction annihilates the reaction
  // although it is transverse to the distribution
  Scenario disk = builtin("vertical_rolling_disk");
  ConservationReport roll =
      reaction_annihilator_test(disk.system, disk.fields.at("Z_roll"), small_opts());
  CHECK(roll.pass());
  CHECK(roll.notes.at("z_in_distribution") == "false");

  // integrable distribution, flat metric, potential annihilated by normals:
  // every normal field passes
  SymbolTable t3 = qu_table(3);
  std::vector<std::vector<Expr>> metric(3, std::vector<Expr>(3, Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  std::vector<VectorFieldQ> plane;
  plane.push_back(make_field({"1", "0", "0"}, t3));
  plane.push_back(make_field({"0", "1", "0"}, t3));
  ConstrainedSystem flat(Lagrangian::mechanical(std::move(metric), parse("q_1^2", t3), 3),
                         DistributionD(std::move(plane), nhtest::box_n(3)));
  CandidateField znormal{make_field({"0", "0", "1"}, t3), {}, "Z_normal"};
  CHECK(reaction_annihilator_test(flat, znormal, small_opts()).pass());
}

TEST_CASE("z_f field: structure and identities") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);

  for (const auto& s : sample_states_on_c(sys, SampleSpec{32, 21})) {
    AdaptedFrame frame = adapted_frame(sys, s);

    // constant f: Z_f = 0 by uniqueness
    ZfSample z0 = z_f_field(sys, Expr::constant(3.0), s);
    CHECK(z0.z.cwiseAbs().maxCoeff() <= 1e-12);

    // f = -E reproduces the dynamics on the lifted-distribution components
    Eigen::VectorXd dE = energy_differential(sys.lagrangian(), s);
    ZfSample zge = z_f_field(frame, (-dE).eval());
    DynamicsSample dyn = gamma_constrained(sys, s);
    Eigen::VectorXd gamma_vec(6);
    gamma_vec << s.u, dyn.a;
    Eigen::VectorXd comps = frame.coframe * gamma_vec;
    CHECK((comps.head(2) - zge.comp_xd).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((comps.segment(3, 2) - zge.comp_yd).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(zge.defect_residual <= 1e-9);

    // explicit formula agrees with a least-squares solve of the defining
    // conditions (uniqueness through a second linear-algebra route)
    Expr f = parse("u_2 + q_1*q_3", t);
    auto grads = [&] {
      std::vector<Expr> g;
      for (int k = 0; k < 6; ++k) g.push_back(f.derivative(k));
      return g;
    }();
    std::vector<double> vals{s.q[0], s.q[1], s.q[2], s.u[0], s.u[1], s.u[2]};
    Eigen::VectorXd df(6);
    for (int k = 0; k < 6; ++k) df[k] = grads[static_cast<std::size_t>(k)].evaluate(vals);
    ZfSample zf = z_f_field(frame, df);

    Eigen::MatrixXd basis(6, 4);
    basis << frame.x_d, frame.y_d;
    Eigen::MatrixXd conditions(4, 4);
    Eigen::VectorXd rhs(4);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 4; ++j) {
        conditions(i, j) = basis.col(j).dot(frame.omega * frame.x_d.col(i));
        conditions(2 + i, j) = basis.col(j).dot(frame.omega * frame.y_d.col(i));
      }
      rhs[i] = df.dot(frame.x_d.col(i));
      rhs[2 + i] = df.dot(frame.y_d.col(i));
    }
    Eigen::VectorXd coef = conditions.colPivHouseholderQr().solve(rhs);
    Eigen::VectorXd z_lsq = basis * coef;
    CHECK((z_lsq - zf.z).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("first integral criterion") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);

  // u_2 is a first integral: both sides vanish
  ConservationReport uy = thm_int_check(sys, parse("u_2", t), "u_2", small_opts());
  CHECK(uy.pass());
  CHECK(uy.conditions.at("identity").max_residual <= 1e-9);

  // the energy always passes (the identity is vacuous but exact)
  ConservationReport e =
      thm_int_check(sys, parse("0.5*(u_1^2+u_2^2+u_3^2)", t), "E", small_opts());
  CHECK(e.pass());

  // u_1 is not conserved: identity still holds, residual channel fails
  ConservationReport ux = thm_int_check(sys, parse("u_1", t), "u_1", small_opts());
  CHECK(!ux.pass());
  CHECK(ux.conditions.at("identity").max_residual <= 1e-9);
  CHECK(ux.conditions.at("gamma_f").max_residual > 1e-3);

  // random polynomial on (q, u): identity residual stays at solver precision
  ConservationReport rnd = thm_int_check(
      sys, parse("q_1*u_3^2 - 0.7*q_2^2*u_1 + u_2*u_3", t), "random", small_opts());
  CHECK(rnd.conditions.at("identity").max_residual <= 1e-9);
  CHECK(rnd.conditions.at("zf_defect").max_residual <= 1e-9);
}

TEST_CASE("symmetry pairing") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);
  Expr uy = parse("u_2", t);
  Expr energy_expr = parse("0.5*(u_1^2+u_2^2+u_3^2)", t);

  // f1 = f2: pairing vanishes by antisymmetry
  ConservationReport same = symmetry_pairing(sys, uy, uy, small_opts());
  CHECK(same.pass());

  // u_2 against E: pairing equals Gamma(u_2) = 0
  ConservationReport pe = symmetry_pairing(sys, uy, energy_expr, small_opts());
  CHECK(pe.pass());

  // unconstrained translations commute
  SymbolTable t2 = qu_table(2);
  std::vector<std::vector<Expr>> metric(2, std::vector<Expr>(2, Expr::constant(0.0)));
  for (int i = 0; i < 2; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  std::vector<VectorFieldQ> full;
  full.push_back(make_field({"1", "0"}, t2));
  full.push_back(make_field({"0", "1"}, t2));
  ConstrainedSystem flat(Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), 2),
                         DistributionD(std::move(full), nhtest::box_n(2)));
  ConservationReport commute =
      symmetry_pairing(flat, parse("u_1", t2), parse("u_2", t2), small_opts());
  CHECK(commute.pass());
}

TEST_CASE("quasi-symmetry channels") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);

  // Z = (0,1,0): [Z, X_1] = (0,0,1) leaves the distribution, so the
  // distribution-symmetry channel fails even though the triple passes
  CandidateField zy{make_field({"0", "1", "0"}, t), {}, "Z_y"};
  ConservationReport rep = quasi_symmetry_check(sys, zy, small_opts());
  CHECK(!rep.pass());
  CHECK(rep.conditions.at("distribution_symmetry").max_residual > 0.1);
  CHECK(rep.conditions.at("quasi_invariance_tq").max_residual <= 1e-12);
  CHECK(rep.notes.at("strong_verdict") == "fail");
  CHECK(noether_triple(sys, zy, small_opts()).pass()); // both facts reported

  // unconstrained flat system, Killing rotation field: all channels pass
  SymbolTable t2 = qu_table(2);
  std::vector<std::vector<Expr>> metric(2, std::vector<Expr>(2, Expr::constant(0.0)));
  for (int i = 0; i < 2; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  std::vector<VectorFieldQ> full;
  full.push_back(make_field({"1", "0"}, t2));
  full.push_back(make_field({"0", "1"}, t2));
  ConstrainedSystem flat(Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), 2),
                         DistributionD(std::move(full), nhtest::box_n(2)));
  CandidateField rot{make_field({"-q_2", "q_1"}, t2), {}, "rotation"};
  ConservationReport rotrep = quasi_symmetry_check(flat, rot, small_opts());
  CHECK(rotrep.pass());
  CHECK(rotrep.notes.at("strong_verdict") == "pass");
  CHECK(rotrep.notes.at("weak_verdict") == "pass");

  // zero field with zero gauge: vacuous pass
  CandidateField zero{make_field({"0", "0"}, t2), Expr::constant(0.0), "zero"};
  CHECK(quasi_symmetry_check(flat, zero, small_opts()).pass());
}

TEST_CASE("killing restriction") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);
  Eigen::VectorXd q = vec3(0.4, -0.8, 1.1);

  // constant field in a flat metric
  CHECK(killing_restricted(sys, make_field({"1", "2", "-1"}, t), q).cwiseAbs().maxCoeff() <=
        1e-12);
  // rotation field: exact Killing
  CHECK(killing_restricted(sys, make_field({"-q_2", "q_1", "0"}, t), q).cwiseAbs().maxCoeff() <=
        1e-12);
  // stretch field q_1 d_1: K_sym(a, b) = 2 X_a^1 X_b^1
  Eigen::MatrixXd K = killing_restricted(sys, make_field({"q_1", "0", "0"}, t), q);
  Eigen::MatrixXd A = sys.d_basis_at(q);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      CHECK(K(a, b) == doctest::Approx(2.0 * A(0, a) * A(0, b)).epsilon(1e-12));
}

TEST_CASE("second fundamental form of the particle distribution") {
  ConstrainedSystem sys = particle_system();
  Eigen::VectorXd q = vec3(0.0, 0.0, 0.0);
  SecondFundamentalForm pi = second_fundamental_form(sys, q);
  REQUIRE(pi.comps.size() == 1);

  // at q_2 = 0: Pi(X1, X1) = Pi(X2, X2) = 0, Pi(X1, X2) = (0, 0, 1/2)
  CHECK(pi.comps[0](0, 0) == doctest::Approx(0.0));
  CHECK(pi.comps[0](1, 1) == doctest::Approx(0.0));
  Eigen::VectorXd v(2);
  v << 1.0, 0.0;
  Eigen::VectorXd w(2);
  w << 0.0, 1.0;
  // polarization: Pi(X1, X2) = (Pi(v+w) - Pi(v) - Pi(w)) / 2
  Eigen::VectorXd sum = pi.vector((v + w).eval()) - pi.vector(v) - pi.vector(w);
  CHECK((0.5 * sum - vec3(0, 0, 0.5)).cwiseAbs().maxCoeff() <= 1e-12);

  // symmetry and normality at random points
  for (const auto& s : sample_states_on_c(sys, SampleSpec{16, 3})) {
    SecondFundamentalForm p = second_fundamental_form(sys, s.q);
    Eigen::MatrixXd A = sys.d_basis_at(s.q);
    Eigen::MatrixXd g = sys.lagrangian().metric_at(s.q);
    for (const auto& comp : p.comps)
      CHECK((comp - comp.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::VectorXd vv(2);
    vv << 0.7, -1.2;
    CHECK((A.transpose() * g * p.vector(vv)).cwiseAbs().maxCoeff() <= 1e-10);
  }

  // integrable coordinate-plane distribution with constant fields: Pi = 0
  Scenario plane = builtin("integrable_plane");
  SecondFundamentalForm p0 = second_fundamental_form(plane.system, q);
  for (const auto& comp : p0.comps) CHECK(comp.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("second fundamental form reproduces the multipliers") {
  Scenario sc = builtin("nonholonomic_particle_gravity");
  for (const auto& s : sample_states_on_c(sc.system, SampleSpec{64, 9})) {
    DynamicsSample dyn = gamma_constrained(sc.system, s);
    SecondFundamentalForm pi = second_fundamental_form(sc.system, s.q);
    Eigen::MatrixXd A = sc.system.d_basis_at(s.q);
    Eigen::MatrixXd g = sc.system.lagrangian().metric_at(s.q);
    Eigen::MatrixXd N = pi.complement;
    Eigen::VectorXd v = (A.transpose() * A).ldlt().solve(A.transpose() * s.u);
    Eigen::VectorXd dphi = sc.system.lagrangian().potential_gradient(s.q);
    for (int a = 0; a < 1; ++a) {
      double expect = N.col(a).dot(g * pi.vector(v)) + N.col(a).dot(dphi);
      CHECK(dyn.lambda[a] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("induced connection of the particle") {
  ConstrainedSystem sys = particle_system();
  Eigen::VectorXd q = vec3(0.3, 0.9, -0.4);
  InducedConnection conn = induced_connection(sys, q);
  double y = q[1];

  // nabla_{X_2} X_1 = (0, 0, 1); distribution components (y/(1+y^2), 0)
  CHECK(conn.coeff[1](0, 0) == doctest::Approx(y / (1.0 + y * y)).epsilon(1e-12));
  CHECK(conn.coeff[1](1, 0) == doctest::Approx(0.0));
  // flat constant fields elsewhere
  CHECK(conn.coeff[0](0, 0) == doctest::Approx(0.0));
  CHECK(conn.coeff[0](1, 1) == doctest::Approx(0.0));

  // metric compatibility on the distribution block by finite differences
  auto g_dd_at = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd A = sys.d_basis_at(p);
    return (A.transpose() * sys.lagrangian().metric_at(p) * A).eval();
  };
  double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd dir = conn.frame.col(i);
    Eigen::MatrixXd lhs = (g_dd_at(q + h * dir) - g_dd_at(q - h * dir)) / (2.0 * h);
    Eigen::MatrixXd g_dd = g_dd_at(q);
    const Eigen::MatrixXd& Gb = conn.coeff[static_cast<std::size_t>(i)];
    Eigen::MatrixXd rhs = Gb.transpose() * g_dd + g_dd * Gb;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()));
  }

  // the symmetrized complement components reproduce the second fundamental
  // form: here via the full-frame solve of nabla_{X_a} X_b
  SecondFundamentalForm pi = second_fundamental_form(sys, q);
  auto Gamma = christoffels(sys.lagrangian(), q);
  Eigen::MatrixXd F = conn.frame;
  Eigen::PartialPivLU<Eigen::MatrixXd> flu(F);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const auto& Xb = sys.distribution().basis()[static_cast<std::size_t>(b)];
      Eigen::VectorXd nab = Xb.jacobian_at(q) * F.col(a);
      for (int r = 0; r < 3; ++r) nab[r] += F.col(a).dot(Gamma[static_cast<std::size_t>(r)] * Xb.at(q));
      const auto& Xa = sys.distribution().basis()[static_cast<std::size_t>(a)];
      Eigen::VectorXd nab2 = Xa.jacobian_at(q) * F.col(b);
      for (int r = 0; r < 3; ++r) nab2[r] += F.col(b).dot(Gamma[static_cast<std::size_t>(r)] * Xa.at(q));
      Eigen::VectorXd sym = flu.solve(0.5 * (nab + nab2));
      CHECK(sym[2] == doctest::Approx(pi.comps[0](a, b)).epsilon(1e-10));
    }
}

TEST_CASE("quadratic integral conditions") {
  Scenario sc = builtin("nonholonomic_particle");
  CheckOptions opts = small_opts(64, 19);
  opts.scenario = sc.name;
  Trajectory traj = integrate(sc.system, {vec3(0, 1, 0), vec3(1, 1, 1)}, 5.0, 1e-3,
                              IntegrateOptions{});

  // A_11 = 1 + q_2^2 is parallel under the induced connection
  ConservationReport good =
      quadratic_integral_check(sc.system, sc.ctensors.at("A_main"), opts, &traj);
  CHECK(good.pass());
  CHECK(good.conditions.at("parallel").max_residual <= 1e-10);
  CHECK(good.conditions.at("potential").max_residual <= 1e-10);
  CHECK(good.drifts.at("quadratic_form").max_drift <= 1e-8);

  // the metric block with f = 2 phi is always a quadratic integral
  SymbolTable t = qu_table(3);
  std::map<std::vector<int>, Expr> gcomps;
  gcomps[{0, 0}] = parse("1+q_2^2", t);
  gcomps[{1, 1}] = Expr::constant(1.0);
  CTensor gtensor(2, 2, 3, std::move(gcomps), Expr::constant(0.0), "g_dd");
  ConservationReport energy_like = quadratic_integral_check(sc.system, gtensor, opts, &traj);
  CHECK(energy_like.pass());

  // a generic tensor fails with a visible residual and measurable drift
  std::map<std::vector<int>, Expr> bad;
  bad[{0, 0}] = Expr::constant(1.0);
  bad[{0, 1}] = parse("q_1", t);
  bad[{1, 1}] = parse("1+q_3^2", t);
  CTensor bad_tensor(2, 2, 3, std::move(bad), Expr::constant(0.0), "random");
  ConservationReport fail = quadratic_integral_check(sc.system, bad_tensor, opts, &traj);
  CHECK(!fail.pass());
  CHECK(fail.conditions.at("parallel").max_residual >= 1e-3);

  // negative control drift: integrate and watch the quadratic form move
  double first = bad_tensor.quadratic_form(traj.samples.front().q,
                                           traj.samples.front().v.head(2));
  double worst = 0.0;
  for (const auto& ts : traj.samples)
    worst = std::max(worst,
                     std::abs(bad_tensor.quadratic_form(ts.q, ts.v.head(2)) - first));
  CHECK(worst > 1e-6);
}

TEST_CASE("restricted tensor on Q") {
  Scenario sc = builtin("nonholonomic_particle_gravity");
  SymbolTable t = qu_table(3);
  CheckOptions opts = small_opts(32, 23);

  // the full metric with f = 2 phi passes every channel
  QTensor gq;
  gq.name = "metric";
  gq.components.assign(3, std::vector<Expr>(3, Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) gq.components[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  gq.f = parse("2*q_3", t);
  ConservationReport rep = restricted_tensor_check(sc.system, gq, opts);
  CHECK(rep.pass());

  // a tensor with zero normal components reduces to the induced-connection
  // conditions: compare channels against quadratic_integral_check
  // A = X_2-flat block: A_ij = delta_i2 delta_j2 corresponds to A_dd = e2 e2^T
  QTensor a22;
  a22.name = "a22";
  a22.components.assign(3, std::vector<Expr>(3, Expr::constant(0.0)));
  a22.components[1][1] = Expr::constant(1.0);
  ConservationReport r1 = restricted_tensor_check(sc.system, a22, opts);
  std::map<std::vector<int>, Expr> c22;
  c22[{1, 1}] = Expr::constant(1.0);
  CTensor ct(2, 2, 3, std::move(c22), {}, "c22");
  ConservationReport r2 = quadratic_integral_check(sc.system, ct, opts);
  // X_2 = (0,1,0) is the second basis field, so A(X_i, X_j) = delta_2i delta_2j:
  // the pi channel vanishes (A has no normal block against this distribution)
  CHECK(r1.conditions.at("pi_orthogonality").max_residual <= 1e-10);
  CHECK(std::abs(r1.conditions.at("parallel_pi").max_residual -
                 r2.conditions.at("parallel").max_residual) <= 1e-10);

  // an ambient Killing tensor with a normal block: the violation localizes
  // in the pi channel
  QTensor k;
  k.name = "ambient";
  k.components.assign(3, std::vector<Expr>(3, Expr::constant(0.0)));
  k.components[0][2] = Expr::constant(1.0);
  k.components[2][0] = Expr::constant(1.0);
  ConservationReport r3 = restricted_tensor_check(sc.system, k, opts);
  CHECK(!r3.pass());
  CHECK(r3.conditions.at("pi_orthogonality").max_residual > 1e-3);
}

TEST_CASE("higher degree integrals") {
  Scenario plane = builtin("integrable_plane");
  CheckOptions opts = small_opts(32, 29);
  Eigen::VectorXd q0 = vec3(0, 0, 1.0);
  Eigen::VectorXd u0 = plane.system.d_basis_at(q0) * Eigen::VectorXd::Constant(2, 0.8);
  Trajectory traj = integrate(plane.system, {q0, u0}, 5.0, 1e-3);

  // flat induced connection: v1^3 is conserved (cubic in a parallel frame)
  ConservationReport cubic =
      higher_degree_check(plane.system, plane.ctensors.at("W_cubic"), opts, &traj);
  CHECK(cubic.pass());
  CHECK(cubic.conditions.at("parallel").max_residual <= 1e-8);
  CHECK(cubic.conditions.at("gradient_orthogonality").max_residual <= 1e-12);
  CHECK(cubic.drifts.at("integral_form").max_drift <= 1e-8);

  // degree-2 tensor routed through the higher-degree formulas matches the
  // quadratic check when the potential plays no role
  Scenario particle = builtin("nonholonomic_particle");
  ConservationReport via_quadratic =
      quadratic_integral_check(particle.system, particle.ctensors.at("A_main"), opts);
  ConservationReport via_higher =
      higher_degree_check(particle.system, particle.ctensors.at("A_main"), opts);
  CHECK(via_quadratic.pass());
  CHECK(via_higher.conditions.at("parallel").max_residual ==
        doctest::Approx(via_quadratic.conditions.at("parallel").max_residual).epsilon(1e-10));

  // a non-parallel cubic tensor fails
  SymbolTable t = qu_table(3);
  std::map<std::vector<int>, Expr> bad;
  bad[{0, 0, 0}] = parse("1+q_1^2", t);
  CTensor bad_tensor(3, 2, 3, std::move(bad), {}, "bad_cubic");
  CHECK(!higher_degree_check(plane.system, bad_tensor, opts).pass());
}

TEST_CASE("generalized triple on tangent fields") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);
  Expr f = parse("u_2", t);
  auto grads = [&] {
    std::vector<Expr> g;
    for (int k = 0; k < 6; ++k) g.push_back(f.derivative(k));
    return g;
  }();

  auto df_at = [&](const TangentState& s) {
    std::vector<double> vals{s.q[0], s.q[1], s.q[2], s.u[0], s.u[1], s.u[2]};
    Eigen::VectorXd df(6);
    for (int k = 0; k < 6; ++k) df[k] = grads[static_cast<std::size_t>(k)].evaluate(vals);
    return df;
  };

  // Z = Z_f: the identity reduces to the first-integral criterion.
  // Frame components are (X_alpha (m), X_a (n-m), Y_alpha (m)).
  TangentFieldOnC zf_provider = [&](const TangentState& s, const AdaptedFrame& frame) {
    ZfSample zf = z_f_field(frame, df_at(s));
    Eigen::VectorXd comps = Eigen::VectorXd::Zero(5);
    comps.head(2) = zf.comp_xd;
    comps.tail(2) = zf.comp_yd;
    return comps;
  };
  CHECK(newfasso_check(sys, zf_provider, "Z_f", f, small_opts()).pass());

  // Z = Gamma with f = -E: all three terms vanish
  Expr negE = parse("-0.5*(u_1^2+u_2^2+u_3^2)", t);
  TangentFieldOnC gamma_provider = [&](const TangentState& s, const AdaptedFrame& frame) {
    DynamicsSample dyn = gamma_constrained(sys, s);
    Eigen::VectorXd gamma_vec(6);
    gamma_vec << s.u, dyn.a;
    Eigen::VectorXd all = frame.coframe * gamma_vec;
    Eigen::VectorXd comps(5);
    comps.head(3) = all.head(3);      // X_alpha and X_a components
    comps.tail(2) = all.segment(3, 2); // Y_alpha components
    return comps;
  };
  CHECK(newfasso_check(sys, gamma_provider, "Gamma", negE, small_opts()).pass());

  // perturbing Z_f along the complement keeps the defect condition and the
  // identity (non-uniqueness of the correspondence)
  TangentFieldOnC perturbed = [&](const TangentState& s, const AdaptedFrame& frame) {
    ZfSample zf = z_f_field(frame, df_at(s));
    Eigen::VectorXd comps = Eigen::VectorXd::Zero(5);
    comps.head(2) = zf.comp_xd;
    comps[2] = 0.8; // X_a direction
    comps.tail(2) = zf.comp_yd;
    return comps;
  };
  CHECK(newfasso_check(sys, perturbed, "Z_f_perturbed", f, small_opts()).pass());

  // a vertical-lift perturbation breaks the defect precondition
  TangentFieldOnC broken = [&](const TangentState& s, const AdaptedFrame& frame) {
    ZfSample zf = z_f_field(frame, df_at(s));
    Eigen::VectorXd comps = Eigen::VectorXd::Zero(5);
    comps.head(2) = zf.comp_xd;
    comps.tail(2) = zf.comp_yd;
    comps[3] += 0.5; // Y_alpha perturbation changes the pairing with X_beta
    return comps;
  };
  CHECK_THROWS_AS(newfasso_check(sys, broken, "broken", f, small_opts()), PreconditionError);
}

TEST_CASE("reaction value has two agreeing computations") {
  ConstrainedSystem sys = particle_system();
  SymbolTable t = qu_table(3);
  VectorFieldQ Z = make_field({"q_3", "-q_1", "1"}, t);
  for (const auto& s : sample_states_on_c(sys, SampleSpec{32, 37})) {
    double via_metric = reaction_form(sys, Z, s);
    // direct route: Gamma(Z^V(L)) - Z^C(L)
    DynamicsSample dyn = gamma_constrained(sys, s);
    const Lagrangian& L = sys.lagrangian();
    double rate = Z.jacobian_times(s.q, s.u).dot(L.du(s)) + Z.at(s.q).dot(L.hessian_uq(s) * s.u) +
                  Z.at(s.q).dot(L.hessian_uu(s) * dyn.a);
    double direct = rate - complete_lift_L(L, Z, s);
    CHECK(std::abs(via_metric - direct) <= 1e-10 * (1.0 + std::abs(direct)));
  }
}
