#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "hlqr/decomp.hpp"
#include "hlqr/lqr.hpp"

namespace hlqr {

/// Network of agents with individual dynamics x_i' = A_i x_i + B_i u_i.
struct HeteroModel {
  std::vector<AgentModel> agents;

  Index N() const { return static_cast<Index>(agents.size()); }
  Index n() const { return agents.empty() ? 0 : agents.front().n(); }
  Index m() const { return agents.empty() ? 0 : agents.front().m(); }
  Matrix A() const;  // block-diagonal A^h
  Matrix B() const;  // block-diagonal B^h
  void validate() const;
  bool homogeneous() const;
};

/// {"agents": [{"A": Matrix, "B": Matrix}, ...]}.
nlohmann::json model_to_json(const HeteroModel& model);
HeteroModel model_from_json(const nlohmann::json& j);

/// State-space realization x' = A x + B w, y = C x + D w.
struct LtiSystem {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;  // empty means zero

  void validate() const;
};

/// sigma_max(C (j w I - A)^{-1} B + D).
double frequency_gain(const LtiSystem& sys, double omega);

struct HinfBounds {
  double lower = 0.0;  // attained at `peak_frequency`
  double upper = 0.0;  // no imaginary-axis Hamiltonian eigenvalues at this level
  double peak_frequency = 0.0;
};

/// Peak gain by level-set iteration on the Hamiltonian: each level's
/// imaginary-axis eigenvalues give frequency intervals whose midpoints raise
/// the attained lower bound, until a level (1 + 2 tol) above it has none.
/// Throws NotHurwitz.
HinfBounds hinf_bounds(const LtiSystem& sys, double tol = 1e-8);
double hinf_norm(const LtiSystem& sys, double tol = 1e-8);

/// sqrt(trace(C X C^T)) with A X + X A^T + B B^T = 0. Throws NotHurwitz or
/// NonzeroFeedthrough.
double h2_norm(const LtiSystem& sys);

/// Matrices of the transformed heterogeneous problem. With Tb = T kron I_n and
/// Th = T kron I_m:
///   A_bar = Tb^T A^h Tb,  B_hat = Tb^T B^h Th,
///   A_tilde = A^h - A_bar, B_tilde = B^h - B_hat,
///   (P_hat, K) stabilizing Riccati pair of (A_bar, B_hat, Q, R),
///   A_hat = A_bar - B_hat K.
struct HeteroLift {
  Matrix A_bar;
  Matrix B_hat;
  Matrix A_tilde;
  Matrix B_tilde;
  Matrix A_hat;
  Matrix P_hat;
  Matrix K;
};

/// Throws PreconditionFailed if (A^h, B^h) is not controllable or Q is not
/// positive definite, NotHurwitz if A_hat is not Hurwitz.
HeteroLift hetero_lift(const HeteroModel& model, const DecompositionPlan& plan, const LqrSpec& spec);

struct LmiResult {
  double max_eig = 0.0;
  bool pass = false;
};

/// Largest eigenvalue of the symmetrized
///   P At + At^T P - P Bt R^{-1} Bh^T P - P Bh R^{-1} Bt^T P - Q - P Bh R^{-1} Bh^T P,
/// which equals P (A^h - B^h K) + (A^h - B^h K)^T P for the Riccati pair of
/// hetero_lift. pass iff negative.
LmiResult lmi_stability_check(const Matrix& a_tilde, const Matrix& b_tilde, const Matrix& p_hat,
                              const Matrix& q, const Matrix& r, const Matrix& b_hat);

struct SmallGainResult {
  double lhs = 0.0;  // ||(A_tilde - B_tilde K) (sI - A^h)^{-1} B^h||_inf, upper bound
  double rhs = 0.0;  // 1 / ||K (sI - A_hat)^{-1}||_inf, from its upper bound
  bool pass = false;
};

/// Requires A^h and A_hat Hurwitz (NotHurwitz otherwise).
SmallGainResult small_gain_check(const HeteroModel& model, const Matrix& k, const Matrix& a_hat,
                                 const Matrix& a_tilde, const Matrix& b_tilde);

struct PerformanceBound {
  double epsilon = 0.0;
  double alpha = 0.0;
  double j2_bar = 0.0;
  double bound = 0.0;
  double actual_j2 = 0.0;
  bool holds = false;  // actual_j2 <= bound (1 + 1e-6)
};

/// H2 bound J2 <= J2_bar + alpha * epsilon for u = -K x on the heterogeneous
/// plant started at x0, with J2 the square root of the quadratic cost.
PerformanceBound performance_bound(const HeteroModel& model, const Matrix& k,
                                   const DecompositionPlan& plan, const LqrSpec& spec,
                                   const Vector& x0);

struct RobustReport {
  HeteroLift lift;
  LmiResult lmi;
  std::optional<SmallGainResult> small_gain;  // empty when A^h is not Hurwitz
  std::optional<PerformanceBound> performance;
  double closed_loop_abscissa = 0.0;  // direct spectral abscissa of A^h - B^h K
  std::optional<double> learned_gain_gap;  // ||K_learned - K||_F / ||K||_F
  std::optional<double> learned_abscissa;
  std::string small_gain_note;
  std::string performance_note;
};

/// Certifies the transformed-problem gain of hetero_lift on the plant and,
/// when given, compares a learned gain against it.
RobustReport robust_report(const HeteroModel& model, const DecompositionPlan& plan,
                           const LqrSpec& spec, const Vector& x0,
                           const std::optional<Matrix>& learned = std::nullopt);

nlohmann::json report_to_json(const RobustReport& report);

}  // namespace hlqr
