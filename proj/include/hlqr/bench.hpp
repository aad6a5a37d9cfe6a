#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlqr/decomp.hpp"
#include "hlqr/rl.hpp"
#include "hlqr/robust.hpp"

namespace hlqr {

enum class BenchMode { Homogeneous, Heterogeneous };
enum class BenchSolver { ModelBased, HierarchicalRl, GlobalRl };

const char* to_string(BenchSolver solver);

struct BenchConfig {
  Index N = 100;
  std::uint64_t seed = 1;
  double hetero = 0.5;  // half-width of the c_i, m_i perturbations
  BenchMode mode = BenchMode::Homogeneous;
  std::vector<BenchSolver> solvers = {BenchSolver::ModelBased, BenchSolver::HierarchicalRl,
                                      BenchSolver::GlobalRl};
  double timeout_s = 300.0;  // global-rl wall-clock budget
  double sample_interval = 0.1;
  RlConfig rl;
  ExcitationConfig excitation;

  void validate() const;
};

/// Laplacian of a connected Erdos-Renyi graph, edge probability
/// min(1, 2 ln N / N), redrawn up to 100 times. Throws GenerationFailed.
Matrix gen_graph(Index N, std::uint64_t seed);

/// Damped double integrators in the plane, x_i = (position, velocity):
/// A_i = [0 I; 0 -(c_i/m_i) I], B_i = [0; (1/m_i) I].
AgentModel double_integrator(double c, double mass);

struct BenchExample {
  LqrSpec spec;
  HeteroModel model;
  Vector x0;
};

/// n = 4, m = 2, G1 = 0.5 I + L, G2 = I, Q0 = I, R0 = I, x0 = 1_N kron w with
/// w uniform in [0, 1]^4. Heterogeneous agents use c_i, m_i uniform in
/// [1 - hetero, 1 + hetero].
BenchExample build_example(const BenchConfig& config);

/// Per-agent starting gain for the learners: a shifted-gramian design on a
/// deliberately wrong nominal model, which is then discarded.
Matrix initial_agent_gain();

struct BenchRow {
  std::string solver;
  double wall_ms = 0.0;
  double J = 0.0;
  double gain_gap_fro = 0.0;
  std::string status;  // ok, timeout, budget_exceeded, unstable or an error name
  std::string message;
  Matrix K;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchRow> rows;
  std::vector<Index> cluster_sizes;
  double hierarchical_cubic = 0.0;  // sum over clusters of (n N_i)^3
  double global_cubic = 0.0;        // (n N)^3
  double J_opt = 0.0;

  const BenchRow* row(BenchSolver solver) const;
};

BenchReport run_bench(const BenchConfig& config);

nlohmann::json bench_to_json(const BenchReport& report);
std::string bench_to_csv(const BenchReport& report);

}  // namespace hlqr
