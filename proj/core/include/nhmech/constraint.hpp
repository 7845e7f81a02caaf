#pragma once

#include <Eigen/Dense>

#include "nhmech/lagrangian.hpp"
#include "nhmech/sampling.hpp"

namespace nhmech {

/// Lagrangian + constraint distribution with cached derived data. Validated
/// at construction on a seeded sample: fibre-metric regularity on TQ and on
/// the distribution, plus symmetry/positive-definiteness for mechanical
/// metrics. Immutable afterwards.
class ConstrainedSystem {
public:
  ConstrainedSystem(Lagrangian lagrangian, DistributionD distribution, unsigned seed = 42,
                    int validation_samples = 256);

  int n() const { return distribution_.n(); }
  int m() const { return distribution_.m(); }
  const Lagrangian& lagrangian() const { return lagrangian_; }
  const DistributionD& distribution() const { return distribution_; }
  const DomainBox& box() const { return distribution_.box(); }

  /// n x m distribution basis at q.
  Eigen::MatrixXd d_basis_at(const Eigen::VectorXd& q) const {
    return distribution_.matrix_at(q);
  }

  /// Complement policy: Gram-Schmidt of the coordinate directions against
  /// the distribution in the fibre metric at the state, first non-degenerate
  /// directions in coordinate order, orthonormalized in g. Deterministic;
  /// n x (n-m) columns with g(X_a, X_alpha) = 0 and g(X_a, X_b) = delta_ab.
  Eigen::MatrixXd complement_at(const TangentState& state) const;

  /// [distribution | complement], n x n.
  Eigen::MatrixXd frame_at(const TangentState& state) const;

private:
  Lagrangian lagrangian_;
  DistributionD distribution_;
};

struct Membership {
  Eigen::VectorXd v;      // all n quasi-velocities against the policy frame
  Eigen::VectorXd v_comp; // the n-m complement components v^a
  bool on_c = false;
  double tol = 0.0;
};

/// On C iff max |v^a| <= tol.
Membership membership(const ConstrainedSystem& system, const TangentState& state,
                      double tol = 1e-9);

/// Builds a fresh on-C state: q from the box, u = sum of v^alpha X_alpha with
/// coefficients in [-1, 1]; all Halton-driven and seeded.
std::vector<TangentState> sample_states_on_c(const ConstrainedSystem& system,
                                             const SampleSpec& spec);

/// Full-TQ states (generally off C): u components in [-1, 1]^n.
std::vector<TangentState> sample_states_tq(const ConstrainedSystem& system,
                                           const SampleSpec& spec);

/// The normalized frame on T(TQ) at a state of C. Columns are coordinate
/// vectors (dq, du) of length 2n. After normalization the mixed and
/// distribution omega blocks vanish, so the pullback of the Cartan 2-form
/// decomposes into the fibre-metric block on (Y_alpha, X_beta) pairs and the
/// skew block omega_cc on (X_a, X_b) pairs.
struct AdaptedFrame {
  Eigen::MatrixXd x_d; // 2n x m       X_alpha
  Eigen::MatrixXd x_c; // 2n x (n-m)   X_a
  Eigen::MatrixXd y_d; // 2n x m       Y_alpha = S(X_alpha)
  Eigen::MatrixXd y_c; // 2n x (n-m)   Y_a     = S(X_a)

  /// Rows, ordered dual to [x_d | x_c | y_d | y_c].
  Eigen::MatrixXd coframe; // 2n x 2n

  Eigen::MatrixXd g_dd;     // m x m
  Eigen::MatrixXd g_cc;     // (n-m) x (n-m)
  Eigen::MatrixXd omega_cc; // (n-m) x (n-m), skew
  Eigen::MatrixXd omega;    // 2n x 2n coordinate Cartan 2-form at the state

  int n = 0;
  int m = 0;

  /// Stacked tangent-to-C basis [x_d | x_c | y_d], 2n x (n+m).
  Eigen::MatrixXd tangent_basis() const;
};

/// Requires the state on C (within on_c_tol); throws PreconditionError
/// otherwise, RegularityError when the fibre metric blocks degenerate.
AdaptedFrame adapted_frame(const ConstrainedSystem& system, const TangentState& state,
                           double on_c_tol = 1e-9);

struct PullbackBlocks {
  Eigen::MatrixXd g_dd;
  Eigen::MatrixXd omega_cc;
  /// max-norm mismatch between the block reconstruction of the pulled-back
  /// form on tangent pairs and direct contraction of the coordinate form.
  double reconstruction_residual = 0.0;
  int rank = 0; // rank of the pulled-back 2-form = 2m + rank(omega_cc)
};

PullbackBlocks pullback_omega(const ConstrainedSystem& system, const TangentState& state);
PullbackBlocks pullback_omega(const AdaptedFrame& frame);

/// Null space basis of omega_cc (columns); dimension (n-m) - rank(omega_cc).
Eigen::MatrixXd characteristic_kernel(const AdaptedFrame& frame, double rel_tol = 1e-9);
Eigen::MatrixXd characteristic_kernel(const ConstrainedSystem& system, const TangentState& state);

} // namespace nhmech
