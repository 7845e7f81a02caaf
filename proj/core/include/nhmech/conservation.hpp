#pragma once

#include <functional>
#include <map>
#include <optional>

#include "nhmech/dynamics.hpp"
#include "nhmech/report.hpp"

namespace nhmech {

/// Symmetry candidate: a vector field on Q with an optional gauge function
/// on Q (basic by assumption; enforced at construction).
struct CandidateField {
  VectorFieldQ Z;
  std::optional<Expr> gauge;
  std::string name;
};

/// Symmetric degree-k tensor over the distribution basis (indices range over
/// 0..m-1), with an optional companion scalar on Q. Components are stored by
/// canonical (sorted) multi-index; missing entries are zero.
class CTensor {
public:
  /// `n_coords` sizes the coordinate block of the symbol table the component
  /// expressions are written over.
  CTensor(int degree, int m, int n_coords, std::map<std::vector<int>, Expr> components,
          std::optional<Expr> f, std::string name);

  int degree() const { return degree_; }
  int m() const { return m_; }
  const std::string& name() const { return name_; }
  const std::optional<Expr>& f() const { return f_; }

  /// Component value at q; any index order.
  double value(const Eigen::VectorXd& q, std::span<const int> index) const;
  /// d(component)/dq_k at q.
  double value_dq(const Eigen::VectorXd& q, std::span<const int> index, int k) const;
  double f_value(const Eigen::VectorXd& q) const;
  double f_dq(const Eigen::VectorXd& q, int k) const;

  /// sum A_{i1..ik} v^{i1} ... v^{ik} (+ f when present).
  double quadratic_form(const Eigen::VectorXd& q, const Eigen::VectorXd& v) const;

private:
  int degree_;
  int m_;
  std::string name_;
  std::map<std::vector<int>, Expr> components_;
  std::map<std::vector<int>, std::vector<Expr>> gradients_;
  std::optional<Expr> f_;
  std::vector<Expr> f_grad_;
};

/// Symmetric (0,2) tensor on Q with coordinate components A_ij.
struct QTensor {
  std::vector<std::vector<Expr>> components; // n x n, symmetric
  std::optional<Expr> f;
  std::string name;
};

struct CheckOptions {
  SampleSpec samples;
  double tol = 1e-9;
  double drift_tol = 1e-8;
  std::string scenario;
};

/// Unique vector field in the span of {X_alpha, Y_alpha} whose contraction
/// with the pulled-back Cartan form matches df on that span.
struct ZfSample {
  Eigen::VectorXd z;       // 2n coordinate components
  Eigen::VectorXd comp_xd; // m components on X_alpha
  Eigen::VectorXd comp_yd; // m components on Y_alpha
  double defect_residual = 0.0;
};

ZfSample z_f_field(const ConstrainedSystem& system, const Expr& f, const TangentState& state);
ZfSample z_f_field(const AdaptedFrame& frame, const Eigen::VectorXd& df);

/// Momentum conservation triple for a field on Q: residuals of the complete
/// lift of L (minus the gauge rate), of the reaction form, and of the flow
/// derivative of the momentum. Any two vanishing force the third; the report
/// carries the exact linear identity and, when the triple passes, the
/// momentum drift along the supplied trajectory.
ConservationReport noether_triple(const ConstrainedSystem& system, const CandidateField& cand,
                                  const CheckOptions& options,
                                  const Trajectory* trajectory = nullptr);

/// epsilon(Z) across on-C samples for Z not necessarily in the distribution.
ConservationReport reaction_annihilator_test(const ConstrainedSystem& system,
                                             const CandidateField& cand,
                                             const CheckOptions& options);

/// Both sides of the first-integral criterion: the flow derivative of f and
/// the energy derivative along Z_f, plus their difference (an identity).
ConservationReport thm_int_check(const ConstrainedSystem& system, const Expr& f,
                                 const std::string& f_name, const CheckOptions& options);

/// Antisymmetry of the pairing between two integrals and its agreement with
/// the pulled-back 2-form evaluated on the corresponding fields.
ConservationReport symmetry_pairing(const ConstrainedSystem& system, const Expr& f1,
                                    const Expr& f2, const CheckOptions& options);

/// Channels of the quasi-symmetry conditions: (distribution_symmetry)
/// brackets [Z, X_alpha] stay in the distribution; (z_in_distribution) Z
/// itself lies in it; (quasi_invariance_tq) Z^C(L) - dF/dt vanishes on all
/// of TQ; (quasi_invariance_c) the same on C only; (d1_compatibility)
/// Y^V(Z^C(L)) = Y(F) on C for Y spanning the first derived distribution.
/// Notes carry separate strong/weak verdicts.
ConservationReport quasi_symmetry_check(const ConstrainedSystem& system,
                                        const CandidateField& cand,
                                        const CheckOptions& options);

/// Symmetrized restriction of u,v -> g(nabla_u Z, v) to the distribution.
/// Zero iff Z is Killing along the distribution directions.
Eigen::MatrixXd killing_restricted(const ConstrainedSystem& system, const VectorFieldQ& Z,
                                   const Eigen::VectorXd& q);

/// Generalized second fundamental form of the distribution: symmetrized
/// normal part of covariant derivatives of the basis fields, components in
/// the g-orthonormal complement basis.
struct SecondFundamentalForm {
  std::vector<Eigen::MatrixXd> comps; // n-m entries, each m x m symmetric
  Eigen::MatrixXd complement;         // n x (n-m) basis the components refer to

  /// Pi(v, v) as a vector on Q for distribution quasi-velocities v.
  Eigen::VectorXd vector(const Eigen::VectorXd& v) const;
};

SecondFundamentalForm second_fundamental_form(const ConstrainedSystem& system,
                                              const Eigen::VectorXd& q);

/// Frame coefficients of the induced connection on distribution sections:
/// coeff[i](beta, alpha) is the X_beta component of nabla_{F_i} X_alpha,
/// with F_i running over the policy frame (distribution then complement).
struct InducedConnection {
  std::vector<Eigen::MatrixXd> coeff;
  Eigen::MatrixXd frame; // n x n policy frame at q
};

InducedConnection induced_connection(const ConstrainedSystem& system, const Eigen::VectorXd& q);

/// Parallelism of a degree-2 tensor under the induced connection plus the
/// potential compatibility channel; drift of the quadratic form along the
/// trajectory when the conditions pass.
ConservationReport quadratic_integral_check(const ConstrainedSystem& system, const CTensor& A,
                                            const CheckOptions& options,
                                            const Trajectory* trajectory = nullptr);

/// Conditions for a tensor on Q restricted to the distribution: the
/// covariant-derivative/second-fundamental-form combination, the two
/// unconstrained-to-constrained channels, and the potential channel.
ConservationReport restricted_tensor_check(const ConstrainedSystem& system, const QTensor& A,
                                           const CheckOptions& options,
                                           const Trajectory* trajectory = nullptr);

/// Degree >= 3 analogue: symmetrized induced-connection parallelism,
/// invariance of the companion scalar, and orthogonality to the projected
/// potential gradient.
ConservationReport higher_degree_check(const ConstrainedSystem& system, const CTensor& A,
                                       const CheckOptions& options,
                                       const Trajectory* trajectory = nullptr);

/// Tangent vectors for the generalized triple, supplied in adapted-frame
/// components (m on X_alpha, n-m on X_a, m on Y_alpha).
using TangentFieldOnC =
    std::function<Eigen::VectorXd(const TangentState&, const AdaptedFrame&)>;

/// Identity Gamma(f) = Z(E) - epsilon(Z) for any tangent Z whose
/// contraction defect against df annihilates the span of {X_alpha, Y_alpha}.
/// The defect is a precondition; its violation throws.
ConservationReport newfasso_check(const ConstrainedSystem& system, const TangentFieldOnC& Z,
                                  const std::string& z_name, const Expr& f,
                                  const CheckOptions& options);

} // namespace nhmech
