#include "nhmech/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "nhmech/sampling.hpp"

namespace nhmech {

bool DomainBox::contains(const Eigen::VectorXd& q) const {
  if (q.size() != min.size()) return false;
  return (q.array() >= min.array()).all() && (q.array() <= max.array()).all();
}

void validate_state(const TangentState& state, int n) {
  if (state.q.size() != n || state.u.size() != n)
    throw Error(ErrorClass::Usage, "state dimension mismatch");
  if (!state.q.allFinite() || !state.u.allFinite())
    throw Error(ErrorClass::Numeric, "non-finite state entries");
}

VectorFieldQ::VectorFieldQ(std::vector<Expr> components, int n_coords)
    : n_(n_coords), components_(std::move(components)) {
  if (static_cast<int>(components_.size()) != n_)
    throw Error(ErrorClass::Usage, "vector field needs one component per coordinate");
  for (const auto& c : components_) {
    if (c.empty()) throw Error(ErrorClass::Usage, "empty vector field component");
    if (c.max_var_index() >= n_)
      throw ScenarioError("vector field components must depend on coordinates only");
  }
  jacobian_.reserve(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      jacobian_.push_back(components_[static_cast<std::size_t>(i)].derivative(j));
}

Eigen::VectorXd VectorFieldQ::at(const Eigen::VectorXd& q) const {
  Eigen::VectorXd out(n_);
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  for (int i = 0; i < n_; ++i) out[i] = components_[static_cast<std::size_t>(i)].evaluate(values);
  return out;
}

Eigen::MatrixXd VectorFieldQ::jacobian_at(const Eigen::VectorXd& q) const {
  Eigen::MatrixXd J(n_, n_);
  std::span<const double> values(q.data(), static_cast<std::size_t>(q.size()));
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) J(i, j) = jacobian_entry(i, j).evaluate(values);
  return J;
}

Eigen::VectorXd VectorFieldQ::jacobian_times(const Eigen::VectorXd& q,
                                             const Eigen::VectorXd& u) const {
  return jacobian_at(q) * u;
}

Eigen::VectorXd lie_bracket(const VectorFieldQ& X, const VectorFieldQ& Y,
                            const Eigen::VectorXd& q) {
  return Y.jacobian_at(q) * X.at(q) - X.jacobian_at(q) * Y.at(q);
}

VectorFieldQ lie_bracket_field(const VectorFieldQ& X, const VectorFieldQ& Y) {
  int n = X.dim();
  std::vector<Expr> comps;
  comps.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Expr acc = Expr::constant(0.0);
    for (int j = 0; j < n; ++j)
      acc = acc + X.component(j) * Y.jacobian_entry(i, j) -
            Y.component(j) * X.jacobian_entry(i, j);
    comps.push_back(acc);
  }
  return VectorFieldQ(std::move(comps), n);
}

DistributionD::DistributionD(std::vector<VectorFieldQ> basis, DomainBox box, unsigned seed,
                             int validation_samples)
    : basis_(std::move(basis)), box_(std::move(box)) {
  int n = box_.dim();
  int m = static_cast<int>(basis_.size());
  if (m < 1 || m > n) throw ScenarioError("distribution basis size must be in [1, n]");
  for (const auto& f : basis_)
    if (f.dim() != n) throw ScenarioError("distribution basis dimension mismatch");
  for (const auto& q : sample_points(box_, SampleSpec{validation_samples, seed})) {
    Eigen::MatrixXd A = matrix_at(q);
    if (numerical_rank(A) != m) {
      throw ScenarioError("distribution basis rank-deficient at sampled point q = [" +
                          [&] {
                            std::string s;
                            for (int i = 0; i < n; ++i)
                              s += (i ? ", " : "") + std::to_string(q[i]);
                            return s;
                          }() +
                          "]");
    }
  }
}

Eigen::MatrixXd DistributionD::matrix_at(const Eigen::VectorXd& q) const {
  Eigen::MatrixXd A(n(), m());
  for (int j = 0; j < m(); ++j) A.col(j) = basis_[static_cast<std::size_t>(j)].at(q);
  return A;
}

FrameQ::FrameQ(std::vector<VectorFieldQ> fields, int m) : fields_(std::move(fields)), m_(m) {
  if (fields_.empty()) throw Error(ErrorClass::Usage, "empty frame");
  int n = static_cast<int>(fields_.size());
  if (m_ < 0 || m_ > n) throw Error(ErrorClass::Usage, "frame split out of range");
  for (const auto& f : fields_)
    if (f.dim() != n) throw Error(ErrorClass::Usage, "frame field dimension mismatch");
}

Eigen::MatrixXd FrameQ::matrix_at(const Eigen::VectorXd& q) const {
  Eigen::MatrixXd F(n(), n());
  for (int j = 0; j < n(); ++j) F.col(j) = fields_[static_cast<std::size_t>(j)].at(q);
  return F;
}

Eigen::VectorXd quasi_velocities(const Eigen::MatrixXd& frame_columns, const Eigen::VectorXd& u) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(frame_columns,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw RegularityError("singular frame: condition number exceeds 1e12");
  return svd.solve(u);
}

Eigen::VectorXd quasi_velocities(const FrameQ& frame, const TangentState& state) {
  validate_state(state, frame.n());
  return quasi_velocities(frame.matrix_at(state.q), state.u);
}

int numerical_rank(const Eigen::MatrixXd& columns, double rel_tol) {
  if (columns.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(columns);
  const auto& sv = svd.singularValues();
  double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax == 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * smax) ++rank;
  return rank;
}

std::vector<int> derived_flag(const DistributionD& D, const Eigen::VectorXd& q, int max_depth) {
  if (max_depth < 1) throw Error(ErrorClass::Usage, "derived_flag: max_depth must be >= 1");
  int n = D.n();
  std::vector<VectorFieldQ> fields = D.basis();

  auto rank_of = [&](const std::vector<VectorFieldQ>& fs) {
    Eigen::MatrixXd A(n, static_cast<int>(fs.size()));
    for (int j = 0; j < static_cast<int>(fs.size()); ++j)
      A.col(j) = fs[static_cast<std::size_t>(j)].at(q);
    return numerical_rank(A);
  };

  std::vector<int> ranks{rank_of(fields)};
  for (int depth = 0; depth < max_depth; ++depth) {
    if (ranks.back() == n) break;
    std::size_t count = fields.size();
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = i + 1; j < count; ++j)
        fields.push_back(lie_bracket_field(fields[i], fields[j]));
    int r = rank_of(fields);
    if (r == ranks.back()) {
      ranks.push_back(r); // stationary: record once and stop
      break;
    }
    ranks.push_back(r);
  }
  return ranks;
}

} // namespace nhmech
