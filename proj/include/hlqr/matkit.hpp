#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hlqr/error.hpp"

namespace hlqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Eigen-decomposition of a symmetric matrix. `values` ascending, column j of
/// `vectors` pairs with values[j], columns orthonormal.
struct SymEig {
  Vector values;
  Matrix vectors;
};

/// Disjoint index groups covering {0..N-1}. Groups are ordered by their
/// smallest member and each group is sorted ascending.
struct Partition {
  std::vector<std::vector<Index>> groups;

  std::size_t size() const { return groups.size(); }
};

// Basic helpers.
bool all_finite(const Matrix& m);
Matrix symmetrize(const Matrix& m);
double spectral_abscissa(const Matrix& a);
bool is_hurwitz(const Matrix& a);
double min_eigenvalue(const Matrix& symmetric);

/// Kronecker product: block (i,j) of the result is a(i,j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

/// Block-diagonal concatenation.
Matrix block_diag(const std::vector<Matrix>& blocks);

/// Requires ||m - m^T||_F <= tol * ||m||_F; the symmetric part is decomposed.
/// Throws NotSymmetric otherwise.
SymEig sym_eig(const Matrix& m, double tol = 1e-8);

/// Connected components of the undirected graph with edge (i,j) whenever
/// |m(i,j)| + |m(j,i)| > tol.
Partition support_partition(const Matrix& m, double tol);

/// Principal square root of a symmetric PSD matrix. Eigenvalues whose
/// magnitude is at most clip_tol * max|lambda| are set to zero; a more
/// negative eigenvalue throws PreconditionFailed.
Matrix sym_sqrt(const Matrix& m, double clip_tol = 1e-10);

/// Number of singular values above rel_tol * sigma_max.
Index numerical_rank(const Matrix& m, double rel_tol = 1e-9);

/// Dimension of the reachable subspace of (a, b), i.e. the rank of the
/// Krylov stack [b, ab, ..., a^{n-1} b]. The stack is built block by block
/// with re-orthogonalised directions so that powers of `a` never overflow;
/// a direction is kept when its singular value exceeds rel_tol times the
/// scale of the block that produced it (sigma_max(b) for the first block,
/// ||a||_F afterwards).
Index krylov_rank(const Matrix& a, const Matrix& b, double rel_tol = 1e-9);

/// Solves a^T X + X a + w = 0. Throws NotHurwitz if a has an eigenvalue with
/// nonnegative real part.
Matrix solve_lyapunov(const Matrix& a, const Matrix& w);

/// Stabilizing state feedback by eigenvalue shifting (Bass's method): with
/// beta = max(0, -min Re lambda(a)) + shift, Z solves
/// (a + beta I) Z + Z (a + beta I)^T = 2 b b^T and the gain is b^T Z^{-1}.
/// Every closed-loop eigenvalue of a - b K has real part <= -beta.
Matrix stabilizing_gain(const Matrix& a, const Matrix& b, double shift = 1.0);

struct KleinmanResult {
  Matrix P;
  Matrix K;
  std::vector<Matrix> iterates;  // P_0, P_1, ...
  int iterations = 0;            // index k of the converged P_k
};

/// Model-based Kleinman policy iteration from a stabilizing k0. Stops once
/// ||P_k - P_{k-1}||_F <= tol (times max(1, ||P_k||_F) when `relative`).
/// Throws K0NotStabilizing, MaxIterExceeded, or SolverDiverged if an iterate
/// loses stability.
KleinmanResult kleinman_iterate(const Matrix& a, const Matrix& b,
                                const Matrix& q, const Matrix& r,
                                const Matrix& k0, double tol, int max_iter,
                                bool relative = false);

enum class AreMethod { Kleinman, SignFunction };

struct AreOptions {
  double residual_tol = 1e-8;
  double rank_tol = 1e-9;
  int max_iter = 100;
  bool check_preconditions = true;
};

struct AreSolution {
  Matrix P;
  Matrix K;
  int iterations = 0;
  AreMethod method = AreMethod::Kleinman;
};

/// ||a^T P + P a + q - P b r^{-1} b^T P||_F.
double are_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                    const Matrix& r, const Matrix& p);

/// Stabilizing solution of the continuous-time algebraic Riccati equation.
/// Kleinman iteration seeded by stabilizing_gain, falling back to the
/// Hamiltonian matrix sign function when the residual bound
/// residual_tol * ||P||_F * max(1, ||a||_F)^2 is not met.
AreSolution solve_are(const Matrix& a, const Matrix& b, const Matrix& q,
                      const Matrix& r, const AreOptions& options = {});

/// Hamiltonian matrix-sign-function route to the same solution. No
/// precondition checks; throws SolverDiverged if the iteration stalls.
Matrix solve_are_sign(const Matrix& a, const Matrix& b, const Matrix& q,
                      const Matrix& r, int max_iter = 100);

}  // namespace hlqr
