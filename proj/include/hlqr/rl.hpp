#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "hlqr/cluster.hpp"
#include "hlqr/decomp.hpp"
#include "hlqr/plant.hpp"

namespace hlqr {

/// e(t) = amplitude * sum_j sin(w_j t + phi_j), independently per channel.
class Excitation {
 public:
  Excitation(const ExcitationConfig& config, Index channels);
  Index channels() const { return frequencies_.rows(); }
  void evaluate(double t, Vector& out) const;

 private:
  double amplitude_ = 0.0;
  Matrix frequencies_;  // channels x components
  Matrix phases_;
};

struct Trajectory {
  std::vector<double> times;
  Matrix states;  // state_dim x samples
  Matrix inputs;  // input_dim x samples
};

/// Classic RK4 on x' = f(x, u) with u = -K x + e(t), sampled every step.
/// Pass nullptr for no excitation. Throws NonFinite once ||x|| > 1e12.
Trajectory simulate(const Plant& plant, const Matrix& gain, const Excitation* excitation,
                    const Vector& x0, double dt, double horizon);

struct RlConfig {
  double dt = 1e-3;
  double tol = 1e-8;
  int max_iter = 50;
  double condition_limit = 1e10;
  double rank_tol = 1e-9;
  // Rough ceiling on the batch and regression storage per cluster.
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
  std::optional<std::chrono::steady_clock::time_point> deadline;
  int threads = 0;  // 0 selects hardware concurrency; HLQR_THREADS caps either way
  double decay_dt = 1e-2;
  double decay_horizon = 20.0;
};

/// Window data for the integral Bellman regression. Symmetric quantities are
/// stored as their upper triangles row by row (n(n+1)/2 entries), general
/// ones column-major.
struct TrajectoryBatch {
  Index state_dim = 0;
  Index input_dim = 0;
  Matrix start;  // state_dim x L, x(t_k)
  Matrix end;    // state_dim x L, x(t_k + delta)
  Matrix ixx;    // L x n(n+1)/2, integral of x x^T
  Matrix iux;    // L x m n, integral of u x^T
  Index rank = 0;
  Index unknowns = 0;
  double condition = 0.0;
  bool rank_ok = false;

  Index windows() const { return start.cols(); }
};

/// Estimated bytes held by a batch and its regression for this cluster.
std::size_t batch_memory_estimate(const ClusterProblem& cluster);

/// Runs the cluster under u = -K0 x + e(t) from x0 and accumulates the window
/// integrals with the trapezoidal rule. Throws ExcitationDeficient if the
/// regression matrix at K0 has rank below the unknown count, BudgetExceeded
/// when the memory estimate is over budget and Timeout past the deadline.
TrajectoryBatch collect_batch(const Plant& plant, const ClusterProblem& cluster, const Vector& x0,
                              const RlConfig& config = {});

struct PolicyIterationResult {
  Matrix K;
  Matrix P;
  int iterations = 0;
  double residual = 0.0;   // relative least-squares residual of the last solve
  double condition = 0.0;  // largest condition estimate met
  std::vector<Matrix> p_history;
  std::vector<Matrix> k_history;  // K_0, K_1, ...
};

/// Off-policy integral policy iteration: each step solves jointly for P_k and
/// K_{k+1} from
///   x^T P_k x |_{t}^{t+delta} - 2 <K_{k+1}, R (Iux + K_k Ixx)> = -<Q + K_k^T R K_k, Ixx>
/// over all windows, until ||P_k - P_{k-1}||_F <= tol * max(1, ||P_k||_F).
PolicyIterationResult offpolicy_pi(const TrajectoryBatch& batch, const ClusterProblem& cluster,
                                   const RlConfig& config = {});

/// Growth rate log(||x(H)|| / ||x(H/2)||) / (H/2) of the unexcited closed loop
/// from a fixed generic initial state. Negative means decaying.
double empirical_decay_rate(const Plant& plant, const Matrix& gain, const RlConfig& config = {});

struct ClusterStats {
  std::size_t index = 0;
  Index size = 0;
  int iterations = 0;
  double residual = 0.0;
  double condition = 0.0;
  double decay_rate = 0.0;
  double wall_ms = 0.0;
  Matrix K;
  Matrix P;
  bool done = false;
};

struct HierarchicalResult {
  Matrix K;
  std::vector<ClusterStats> clusters;
  double total_wall_ms = 0.0;
};

/// Error raised by one cluster, with whatever the other clusters finished.
class ClusterFailure : public Error {
 public:
  ClusterFailure(const Error& cause, std::size_t cluster, HierarchicalResult partial);
  std::size_t cluster() const noexcept { return cluster_; }
  const HierarchicalResult& partial() const noexcept { return partial_; }

 private:
  std::size_t cluster_;
  HierarchicalResult partial_;
};

/// Worker count after applying the HLQR_THREADS cap.
int resolve_threads(int requested, std::size_t tasks);

/// Per-cluster model-free learning. `plant` is the global network in agent
/// coordinates; cluster i observes it through xi_i = (T_i kron I_n) x and
/// v_i = (T_i kron I_m) u. `initial_gains[i]` must stabilize cluster i and x0
/// is the global initial state. The learned gains are checked for decay on
/// the cluster plant and assembled into the global gain.
HierarchicalResult hierarchical_solve(const LqrSpec& spec, const DecompositionPlan& plan,
                                      std::shared_ptr<const Plant> plant,
                                      const std::vector<Matrix>& initial_gains, const Vector& x0,
                                      const ExcitationConfig& excitation,
                                      double sample_interval = 0.1, const RlConfig& config = {});

nlohmann::json learned_to_json(const HierarchicalResult& result);

}  // namespace hlqr
