#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "nhmech/lagrangian.hpp"

using namespace nhmech;
using nhtest::make_field;
using nhtest::qu_table;
using nhtest::vec3;

namespace {

Lagrangian free_particle(int n) {
  std::vector<std::vector<Expr>> metric(static_cast<std::size_t>(n),
                                        std::vector<Expr>(static_cast<std::size_t>(n),
                                                          Expr::constant(0.0)));
  for (int i = 0; i < n; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  return Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), n);
}

Lagrangian polar_like() {
  SymbolTable t = qu_table(3);
  std::vector<std::vector<Expr>> metric(3, std::vector<Expr>(3, Expr::constant(0.0)));
  metric[0][0] = Expr::constant(1.0);
  metric[1][1] = parse("q_1^2", t);
  metric[2][2] = Expr::constant(1.0);
  return Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), 3);
}

} // namespace

TEST_CASE("vertical lift of L") {
  SymbolTable t = qu_table(3);
  Lagrangian L = free_particle(3);
  TangentState s{vec3(0, 1, 0), vec3(1, 1, 1)};

  CHECK(vertical_lift_L(L, make_field({"0", "1", "0"}, t), s) == doctest::Approx(1.0));
  CHECK(vertical_lift_L(L, make_field({"0", "0", "0"}, t), s) == doctest::Approx(0.0));
  CHECK(vertical_lift_L(L, make_field({"1", "0", "q_2"}, t), s) == doctest::Approx(2.0));
  // equals g(X, u) for mechanical L
  Eigen::VectorXd x = vec3(1, 0, 1);
  CHECK(vertical_lift_L(L, make_field({"1", "0", "q_2"}, t), s) ==
        doctest::Approx(x.dot(L.metric_at(s.q) * s.u)).epsilon(1e-12));
}

TEST_CASE("complete lift of L") {
  SymbolTable t = qu_table(3);
  Lagrangian L = free_particle(3);

  // constant field, q-independent L
  TangentState s{vec3(0.4, -0.9, 1.2), vec3(0.7, -1.3, 0.2)};
  CHECK(complete_lift_L(L, make_field({"1", "2", "3"}, t), s) == doctest::Approx(0.0));

  // particle field: only dX^3/dq^2 = 1 contributes, giving u_2 u_3
  CHECK(complete_lift_L(L, make_field({"1", "0", "q_2"}, t), s) ==
        doctest::Approx(s.u[1] * s.u[2]).epsilon(1e-13));

  // with a potential the kinetic part drops for a coordinate translation
  SymbolTable t3 = qu_table(3);
  std::vector<std::vector<Expr>> metric(3, std::vector<Expr>(3, Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  Lagrangian Lphi = Lagrangian::mechanical(std::move(metric), parse("q_2^2", t3), 3);
  CHECK(complete_lift_L(Lphi, make_field({"0", "1", "0"}, t), s) ==
        doctest::Approx(-2.0 * s.q[1]).epsilon(1e-13));
}

TEST_CASE("energy") {
  SymbolTable t = qu_table(3);
  std::vector<std::vector<Expr>> metric(3, std::vector<Expr>(3, Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
      Expr::constant(1.0);
  Lagrangian L = Lagrangian::mechanical(std::move(metric), parse("q_3", t), 3);

  TangentState s{vec3(0.0, 0.0, 2.0), vec3(1.0, 2.0, 0.0)};
  CHECK(energy(L, s) == doctest::Approx(0.5 * 5.0 + 2.0));
  TangentState rest{vec3(1.0, 1.0, -0.5), Eigen::VectorXd::Zero(3)};
  CHECK(energy(L, rest) == doctest::Approx(-0.5));

  // quartic Lagrangian: E = 3/4 |u|^4 by degree-4 homogeneity
  Lagrangian quartic =
      Lagrangian::general(parse("0.25*(u_1^2+u_2^2+u_3^2)^2", qu_table(3)), 3);
  TangentState unit{vec3(0, 0, 0), vec3(1, 0, 0)};
  CHECK(energy(quartic, unit) == doctest::Approx(0.75));
}

TEST_CASE("hessian metric and blocks") {
  SymbolTable t = qu_table(3);
  Lagrangian L = free_particle(3);
  TangentState s{vec3(0.2, 1.0, -0.3), vec3(0.5, -0.1, 0.9)};
  Eigen::MatrixXd frame = Eigen::MatrixXd::Identity(3, 3);
  FibreMetricSample g = hessian_metric(L, s, frame, 2);
  CHECK((g.g - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

  Lagrangian Lq = Lagrangian::general(parse("0.5*(1+q_1^2)*u_1^2 + 0.5*u_2^2", qu_table(2)), 2);
  TangentState s2{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
  s2.q[0] = 0.7;
  FibreMetricSample g2 = hessian_metric(Lq, s2, Eigen::MatrixXd::Identity(2, 2), 1);
  CHECK(g2.g(0, 0) == doctest::Approx(1.0 + 0.49).epsilon(1e-14));
  CHECK(g2.g(0, 1) == doctest::Approx(0.0));
  CHECK(g2.g(1, 1) == doctest::Approx(1.0));

  // mechanical Hessian is velocity-independent
  Lagrangian Lp = polar_like();
  TangentState sa{vec3(1.3, 0.2, -0.7), vec3(1, 2, 3)};
  TangentState sb{sa.q, vec3(-2, 0.5, 0)};
  CHECK((Lp.hessian_uu(sa) - Lp.hessian_uu(sb)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cartan forms") {
  SymbolTable t = qu_table(3);
  Lagrangian L = free_particle(3);
  TangentState s{vec3(0.0, 1.0, 0.0), vec3(0.4, -0.2, 0.9)};
  CartanSample c = cartan_forms(L, s);

  // canonical structure: theta = u_i dq^i, omega = du^i wedge dq^i
  CHECK((c.theta.head(3) - s.u).norm() == 0.0);
  CHECK(c.theta.tail(3).norm() == 0.0);
  CHECK((c.omega + c.omega.transpose()).norm() == 0.0);
  CHECK(c.omega.bottomRightCorner(3, 3).norm() == 0.0); // vanishes on vertical pairs
  CHECK((c.omega.bottomLeftCorner(3, 3) - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

  // the du-dq block equals the fibre metric for any Lagrangian
  Lagrangian Lq = Lagrangian::general(parse("0.5*(1+q_1^2)*u_1^2+0.5*u_2^2+q_1*u_2", qu_table(2)), 2);
  TangentState s2{Eigen::VectorXd::Constant(2, 0.3), Eigen::VectorXd::Constant(2, -0.8)};
  CartanSample c2 = cartan_forms(Lq, s2);
  CHECK((c2.omega.bottomLeftCorner(2, 2) - Lq.hessian_uu(s2)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(c2.omega.bottomRightCorner(2, 2).norm() == 0.0);

  // contraction with lift direction pairs picks out g(X, X): the pairing of
  // a vertical lift of X with a 2n-vector whose base part is X
  Eigen::VectorXd x = vec3(1, 0, s.q[1]);
  Eigen::VectorXd vlift(6), clift(6);
  vlift.setZero();
  vlift.tail(3) = x;
  clift.setZero();
  clift.head(3) = x;
  double pairing = vlift.dot(c.omega * clift);
  CHECK(pairing == doctest::Approx(1.0 + s.q[1] * s.q[1]).epsilon(1e-13));

  // closure of the coordinate 2-form: finite-difference exterior derivative
  // d(omega)(e_i, e_j, e_k) over coordinate directions vanishes
  Lagrangian Lgen = Lagrangian::general(
      parse("0.5*(1+q_1^2)*u_1^2+0.5*u_2^2+sin(q_2)*u_1*u_2", qu_table(2)), 2);
  auto omega_at = [&](const Eigen::VectorXd& z) {
    TangentState st{z.head(2), z.tail(2)};
    return cartan_forms(Lgen, st).omega;
  };
  Eigen::VectorXd z0(4);
  z0 << 0.3, -0.6, 0.9, 0.4;
  double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        auto d_comp = [&](int dir, int a, int b) {
          Eigen::VectorXd zp = z0, zm = z0;
          zp[dir] += h;
          zm[dir] -= h;
          return (omega_at(zp)(a, b) - omega_at(zm)(a, b)) / (2.0 * h);
        };
        double closure = d_comp(i, j, k) + d_comp(j, k, i) + d_comp(k, i, j);
        worst = std::max(worst, std::abs(closure));
      }
  CHECK(worst < 1e-7);
}

TEST_CASE("christoffels, covariant derivative, gradient") {
  SymbolTable t = qu_table(3);
  Lagrangian flat = free_particle(3);
  Eigen::VectorXd q = vec3(1.0, 0.5, -0.2);

  auto Gflat = christoffels(flat, q);
  for (const auto& Gi : Gflat) CHECK(Gi.norm() == 0.0);

  Lagrangian Lp = polar_like();
  auto G = christoffels(Lp, q); // q_1 = 1
  CHECK(G[1](0, 1) == doctest::Approx(1.0 / q[0]).epsilon(1e-12)); // G^2_12 = 1/q_1
  CHECK(G[1](1, 0) == doctest::Approx(1.0 / q[0]).epsilon(1e-12));
  CHECK(G[0](1, 1) == doctest::Approx(-q[0]).epsilon(1e-12)); // G^1_22 = -q_1
  double offsum = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        if (!((i == 1 && j != k && j + k == 1) || (i == 0 && j == 1 && k == 1)))
          offsum += std::abs(G[static_cast<std::size_t>(i)](j, k));
  CHECK(offsum <= 1e-12);

  // flat metric: covariant derivative reduces to the directional derivative
  VectorFieldQ X = make_field({"q_2", "0", "1"}, t);
  VectorFieldQ Y = make_field({"q_1*q_2", "q_3", "0"}, t);
  Eigen::VectorXd cd = covariant_derivative(flat, X, Y, q);
  CHECK((cd - Y.jacobian_times(q, X.at(q))).norm() <= 1e-13);

  Lagrangian grav = [] {
    std::vector<std::vector<Expr>> metric(3, std::vector<Expr>(3, Expr::constant(0.0)));
    for (int i = 0; i < 3; ++i) metric[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
        Expr::constant(1.0);
    return Lagrangian::mechanical(std::move(metric), parse("q_3", qu_table(3)), 3);
  }();
  CHECK((grad_potential(grav, q) - vec3(0, 0, 1)).norm() == 0.0);
}

TEST_CASE("connection is torsion-free and metric-compatible") {
  SymbolTable t = qu_table(2);
  std::vector<std::vector<Expr>> metric(2, std::vector<Expr>(2, Expr::constant(0.0)));
  metric[0][0] = parse("1+q_2^2", t);
  metric[1][1] = parse("exp(q_1)", t);
  Lagrangian L = Lagrangian::mechanical(std::move(metric), Expr::constant(0.0), 2);

  std::mt19937 rng(23);
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd q(2);
    q << c(rng), c(rng);
    VectorFieldQ X = make_field({"q_2", "1"}, t);
    VectorFieldQ Y = make_field({"q_1", "q_1*q_2"}, t);

    Eigen::VectorXd torsion = covariant_derivative(L, X, Y, q) -
                              covariant_derivative(L, Y, X, q) - lie_bracket(X, Y, q);
    CHECK(torsion.cwiseAbs().maxCoeff() <= 1e-9);

    // X(g(Y,Y)) = 2 g(nabla_X Y, Y), left side by central differences
    auto gyy = [&](const Eigen::VectorXd& p) {
      return (Y.at(p).transpose() * L.metric_at(p) * Y.at(p))(0);
    };
    double h = 1e-6;
    Eigen::VectorXd dir = X.at(q);
    double lhs = (gyy(q + h * dir) - gyy(q - h * dir)) / (2.0 * h);
    double rhs = 2.0 * covariant_derivative(L, X, Y, q).dot(L.metric_at(q) * Y.at(q));
    CHECK(std::abs(lhs - rhs) <= 1e-8 * (1.0 + std::abs(rhs)));
  }
}

TEST_CASE("mechanical-only operations reject general Lagrangians") {
  Lagrangian L = Lagrangian::general(parse("0.5*u_1^2", qu_table(1)), 1);
  Eigen::VectorXd q(1);
  q << 0.0;
  CHECK_THROWS_AS(christoffels(L, q), UnsupportedOperationError);
  CHECK_THROWS_AS(grad_potential(L, q), UnsupportedOperationError);
}

TEST_CASE("energy differential matches finite differences") {
  Lagrangian L = Lagrangian::general(
      parse("0.5*(1+q_1^2)*u_1^2+0.5*u_2^2+q_1*q_2 - q_2*u_1", qu_table(2)), 2);
  TangentState s{Eigen::VectorXd::Constant(2, 0.4), Eigen::VectorXd::Constant(2, -0.9)};
  Eigen::VectorXd dE = energy_differential(L, s);
  double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    TangentState p = s, m = s;
    (k < 2 ? p.q[k] : p.u[k - 2]) += h;
    (k < 2 ? m.q[k] : m.u[k - 2]) -= h;
    double fd = (energy(L, p) - energy(L, m)) / (2.0 * h);
    CHECK(std::abs(dE[k] - fd) <= 1e-7 * (1.0 + std::abs(fd)));
  }
}
