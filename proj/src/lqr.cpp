#include "hlqr/lqr.hpp"

#include <string>

namespace hlqr {

void AgentModel::validate() const {
  if (A.rows() != A.cols() || B.rows() != A.rows() || A.rows() == 0 || B.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "agent model needs square A and B with matching rows");
  }
  if (!A.allFinite() || !B.allFinite()) {
    throw Error(ErrorCode::NonFinite, "agent model has non-finite entries");
  }
}

bool controllability_ok(const Matrix& a, const Matrix& b, double tol) {
  return krylov_rank(a, b, tol) == a.rows();
}

bool observability_ok(const Matrix& c, const Matrix& a, double tol) {
  if (c.cols() != a.rows()) throw Error(ErrorCode::DimensionMismatch, "C and A do not conform");
  return krylov_rank(a.transpose(), c.transpose(), tol) == a.rows();
}

KleinmanResult kleinman_pi(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                           const Matrix& k0, double tol, int max_iter) {
  return kleinman_iterate(a, b, q, r, k0, tol, max_iter, /*relative=*/false);
}

Matrix assemble_gain(const DecompositionPlan& plan, const std::vector<Matrix>& cluster_gains,
                     Index n, Index m) {
  if (cluster_gains.size() != plan.r()) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(plan.r()) +
                                                  " cluster gains, got " +
                                                  std::to_string(cluster_gains.size()));
  }
  const Index agents = plan.N();
  Index total = 0;
  for (std::size_t i = 0; i < plan.r(); ++i) {
    const Index size = plan.cluster_sizes[i];
    if (cluster_gains[i].rows() != m * size || cluster_gains[i].cols() != n * size) {
      throw Error(ErrorCode::DimensionMismatch,
                  "cluster " + std::to_string(i) + " gain has the wrong shape");
    }
    total += size;
  }
  if (total != agents) throw Error(ErrorCode::DimensionMismatch, "cluster sizes do not sum to N");

  // Sum over clusters of (T_i^T kron I_m) kappa_i (T_i kron I_n), where T_i
  // holds the cluster's rows of T.
  Matrix k = Matrix::Zero(m * agents, n * agents);
  for (std::size_t i = 0; i < plan.r(); ++i) {
    const Matrix rows = plan.cluster_rows(i);
    const Matrix right = kron(rows, Matrix::Identity(n, n));
    const Matrix left = kron(rows.transpose(), Matrix::Identity(m, m));
    k.noalias() += left * (cluster_gains[i] * right);
  }
  return k;
}

double evaluate_cost(const Matrix& acl, const Matrix& q_eff, const Vector& x0) {
  if (x0.size() != acl.rows()) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");
  const Matrix w = solve_lyapunov(acl, q_eff);
  return x0.dot(w * x0);
}

Matrix model_based_gain(const LqrSpec& spec, const DecompositionPlan& plan, const AgentModel& agent,
                        std::vector<Matrix>* cluster_gains) {
  agent.validate();
  if (agent.n() != spec.n || agent.m() != spec.m) {
    throw Error(ErrorCode::DimensionMismatch, "agent model does not match n, m");
  }
  std::vector<Matrix> gains;
  for (const ClusterProblem& p : project_problem(spec, plan)) {
    const Matrix eye = Matrix::Identity(p.agents, p.agents);
    gains.push_back(solve_are(kron(eye, agent.A), kron(eye, agent.B), p.q_block, p.r_block).K);
  }
  Matrix k = assemble_gain(plan, gains, spec.n, spec.m);
  if (cluster_gains) *cluster_gains = std::move(gains);
  return k;
}

}  // namespace hlqr
