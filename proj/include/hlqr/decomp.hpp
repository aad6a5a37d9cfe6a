#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "hlqr/cluster.hpp"
#include "hlqr/matkit.hpp"

namespace hlqr {

/// Networked LQR problem with Kronecker-structured weights
/// Q = kron(G1, Q0), R = kron(G2, R0) over N agents of state dim n, input dim m.
struct LqrSpec {
  Index N = 0;
  Index n = 0;
  Index m = 0;
  Matrix G1;
  Matrix G2;
  Matrix Q0;
  Matrix R0;

  /// G1 symmetric PSD (min eig >= -1e-10), G2, Q0, R0 symmetric PD, sizes
  /// consistent with N, n, m. Throws PreconditionFailed or DimensionMismatch.
  void validate() const;

  Matrix Q() const { return kron(G1, Q0); }
  Matrix R() const { return kron(G2, R0); }
};

enum class PlanMethod {
  Pairing,           // eigenvector pairing under distinct eigenvalues
  CommonEigenbasis,  // commuting weights with repeated eigenvalues
  Trivial,           // r = 1, T = I
};

const char* to_string(PlanMethod method);

/// Orthogonal T with T G1 T^T = diag(phi) and T G2 T^T = diag(psi). Rows of
/// T are grouped by cluster in order; cluster i owns rows
/// [offset(i), offset(i) + cluster_sizes[i]).
struct DecompositionPlan {
  Matrix T;
  std::vector<Index> cluster_sizes;
  std::vector<Matrix> phi;
  std::vector<Matrix> psi;
  bool decomposable = false;
  PlanMethod method = PlanMethod::Trivial;
  std::size_t pairing_products = 0;  // inner products evaluated while pairing

  std::size_t r() const { return cluster_sizes.size(); }
  Index N() const { return T.rows(); }
  Index offset(std::size_t cluster) const;
  /// Rows of T belonging to a cluster (N_i x N).
  Matrix cluster_rows(std::size_t cluster) const;
};

/// ||G1 G2 - G2 G1||_F <= tol * ||G1||_F * ||G2||_F.
bool check_commute(const Matrix& g1, const Matrix& g2, double tol = 1e-8);

/// Whether im(gamma) is g-invariant. gamma must have orthonormal columns
/// (within tol) and fewer columns than rows, else NotOrthonormal.
bool invariant_subspace_check(const Matrix& g, const Matrix& gamma, double tol = 1e-8);

/// Builds the transformation matrix with the largest number of clusters.
///
/// With distinct eigenvalues on both sides, eigenvectors p_i of G1 and q_j of
/// G2 are linked whenever |p_i^T q_j| > 1e-8 N and the transitive closure of
/// that relation gives the clusters; T = E1 E2^T E1 where E1, E2 hold the
/// permuted eigenvectors as rows. Repeated eigenvalues fall back to a common
/// eigenbasis when G1 and G2 commute (r = N) and throw NotSupported
/// otherwise. When no split exists the trivial plan (T = I, r = 1) is
/// returned with decomposable == false.
DecompositionPlan construct_T(const Matrix& g1, const Matrix& g2, double tol = 1e-8);

/// r = 1 plan with T = I.
DecompositionPlan trivial_plan(const Matrix& g1, const Matrix& g2);

struct PlanReport {
  double orthogonality = 0.0;  // ||T T^T - I||_F
  double off_block_g1 = 0.0;   // Frobenius mass of T G1 T^T outside the blocks
  double off_block_g2 = 0.0;
  double block_mismatch = 0.0;  // max over clusters of ||phi_i - (T G1 T^T)_ii||_F, same for psi
  bool pass = false;
};

/// Pass requires orthogonality <= orth_tol, off-block residuals and block
/// mismatch <= tol * ||G||_F.
PlanReport verify_plan(const DecompositionPlan& plan, const Matrix& g1, const Matrix& g2,
                       double tol = 1e-8, double orth_tol = 1e-10);

/// Per-cluster problems with Q block kron(phi_i, Q0) and R block kron(psi_i, R0).
std::vector<ClusterProblem> project_problem(const LqrSpec& spec, const DecompositionPlan& plan);

nlohmann::json plan_to_json(const DecompositionPlan& plan);
DecompositionPlan plan_from_json(const nlohmann::json& j);

/// {"N","n","m","G1","G2","Q0","R0"}; extra keys are ignored.
nlohmann::json spec_to_json(const LqrSpec& spec);
LqrSpec spec_from_json(const nlohmann::json& j);

}  // namespace hlqr
