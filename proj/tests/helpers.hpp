#pragma once

#include <string>
#include <vector>

#include "nhmech/constraint.hpp"
#include "nhmech/expr.hpp"

namespace nhtest {

inline nhmech::SymbolTable qu_table(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("q_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("u_" + std::to_string(i));
  return nhmech::SymbolTable(std::move(names));
}

inline nhmech::VectorFieldQ make_field(const std::vector<std::string>& comps,
                                       const nhmech::SymbolTable& t) {
  std::vector<nhmech::Expr> exprs;
  for (const auto& c : comps) exprs.push_back(nhmech::parse(c, t));
  return nhmech::VectorFieldQ(std::move(exprs), static_cast<int>(comps.size()));
}

inline Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

inline nhmech::DomainBox box_n(int n, double lo = -2.0, double hi = 2.0) {
  return nhmech::DomainBox{Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi)};
}

/// The running example: flat free particle with the velocity constraint
/// u_3 = q_2 u_1.
inline nhmech::ConstrainedSystem particle_system(const std::string& potential = "0") {
  nhmech::SymbolTable t = qu_table(3);
  std::vector<std::vector<nhmech::Expr>> metric(3, std::vector<nhmech::Expr>(
                                                       3, nhmech::Expr::constant(0.0)));
  for (int i = 0; i < 3; ++i) metric[i][i] = nhmech::Expr::constant(1.0);
  nhmech::Lagrangian L =
      nhmech::Lagrangian::mechanical(std::move(metric), nhmech::parse(potential, t), 3);
  std::vector<nhmech::VectorFieldQ> basis;
  basis.push_back(make_field({"1", "0", "q_2"}, t));
  basis.push_back(make_field({"0", "1", "0"}, t));
  nhmech::DistributionD D(std::move(basis), box_n(3));
  return nhmech::ConstrainedSystem(std::move(L), std::move(D));
}

} // namespace nhtest
