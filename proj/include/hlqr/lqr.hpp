#pragma once

#include <vector>

#include "hlqr/decomp.hpp"
#include "hlqr/matkit.hpp"

namespace hlqr {

/// Per-agent dynamics x_i' = A x_i + B u_i.
struct AgentModel {
  Matrix A;  // n x n
  Matrix B;  // n x m

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  void validate() const;
};

/// Rank of [B, AB, ..., A^{n-1}B] equals n (singular values above tol * sigma_max).
bool controllability_ok(const Matrix& a, const Matrix& b, double tol = 1e-9);

/// Rank of [C; CA; ...; CA^{n-1}] equals n.
bool observability_ok(const Matrix& c, const Matrix& a, double tol = 1e-9);

/// Kleinman policy iteration from a stabilizing k0 with absolute stopping
/// rule ||P_k - P_{k-1}||_F <= tol.
KleinmanResult kleinman_pi(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                           const Matrix& k0, double tol = 1e-10, int max_iter = 50);

/// K = (T^T kron I_m) diag(kappa_1..kappa_r) (T kron I_n).
Matrix assemble_gain(const DecompositionPlan& plan, const std::vector<Matrix>& cluster_gains,
                     Index n, Index m);

/// x0^T W x0 with W = solve_lyapunov(acl, q_eff).
double evaluate_cost(const Matrix& acl, const Matrix& q_eff, const Vector& x0);

/// Model-based hierarchical solution: solve_are on every cluster problem of a
/// homogeneous plant, then assemble. Returns the per-cluster gains through
/// `cluster_gains` when given.
Matrix model_based_gain(const LqrSpec& spec, const DecompositionPlan& plan, const AgentModel& agent,
                        std::vector<Matrix>* cluster_gains = nullptr);

}  // namespace hlqr
