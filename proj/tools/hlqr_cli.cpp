// hlqr: decompose networked LQR problems, learn cluster gains, certify them
// on heterogeneous plants and run the double-integrator benchmark.
//
// Exit codes: 0 success, 2 rejected input, 3 solver failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hlqr/bench.hpp"
#include "hlqr/decomp.hpp"
#include "hlqr/lqr.hpp"
#include "hlqr/matrix_io.hpp"
#include "hlqr/rl.hpp"
#include "hlqr/robust.hpp"

namespace {

using namespace hlqr;

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

Vector read_vector_file(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) throw Error(ErrorCode::ParseError, "cannot open " + path);
  char first = 0;
  probe >> first;
  if (first == '[' || first == '{') {
    const nlohmann::json j = read_json_file(path);
    if (j.is_object() && j.contains("x0")) return vector_from_json(j.at("x0"));
    return vector_from_json(j);
  }
  const Matrix m = read_matrix_file(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw Error(ErrorCode::ParseError, path + " does not hold a vector");
}

// A bare matrix file, or any JSON object with a "K" matrix (solve output).
Matrix read_gain_file(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) throw Error(ErrorCode::ParseError, "cannot open " + path);
  char first = 0;
  probe >> first;
  if (first == '{') {
    const nlohmann::json j = read_json_file(path);
    if (j.contains("K")) return matrix_from_json(j.at("K"));
    return matrix_from_json(j);
  }
  return read_matrix_file(path);
}

AgentModel agent_from_spec(const nlohmann::json& j) {
  if (!j.contains("A") || !j.contains("B")) {
    throw Error(ErrorCode::ParseError, "spec needs per-agent \"A\" and \"B\" matrices");
  }
  AgentModel agent{matrix_from_json(j.at("A")), matrix_from_json(j.at("B"))};
  agent.validate();
  return agent;
}

struct DecomposeArgs {
  std::string g1, g2, out;
  double tol = 1e-8;
};

int run_decompose(const DecomposeArgs& a) {
  const Matrix g1 = read_matrix_file(a.g1);
  const Matrix g2 = read_matrix_file(a.g2);
  const DecompositionPlan plan = construct_T(g1, g2, a.tol);
  const PlanReport check = verify_plan(plan, g1, g2, a.tol);
  write_json_file(a.out, plan_to_json(plan));
  std::cout << "r = " << plan.r() << " (" << to_string(plan.method) << ")"
            << (plan.decomposable ? "" : ", not decomposable") << "\n"
            << "orthogonality " << check.orthogonality << ", off-block " << check.off_block_g1
            << " / " << check.off_block_g2 << "\n";
  return check.pass ? 0 : kExitSolver;
}

struct SolveArgs {
  std::string spec, plan, mode = "model-based", out, x0, k0;
  std::uint64_t seed = 1;
  double dt = 1e-3;
  double delta = 0.1;
  double tol = 1e-8;
  int max_iter = 50;
};

int run_solve(const SolveArgs& a) {
  const nlohmann::json spec_json = read_json_file(a.spec);
  const LqrSpec spec = spec_from_json(spec_json);
  spec.validate();
  const AgentModel agent = agent_from_spec(spec_json);
  const DecompositionPlan plan = plan_from_json(read_json_file(a.plan));
  if (!verify_plan(plan, spec.G1, spec.G2).pass) {
    throw Error(ErrorCode::PreconditionFailed, "plan does not block-diagonalize G1 and G2");
  }

  nlohmann::json out;
  if (a.mode == "model-based") {
    const auto t0 = std::chrono::steady_clock::now();
    HierarchicalResult res;
    for (const ClusterProblem& p : project_problem(spec, plan)) {
      const auto c0 = std::chrono::steady_clock::now();
      const Matrix eye = Matrix::Identity(p.agents, p.agents);
      const Matrix a_c = kron(eye, agent.A);
      const Matrix b_c = kron(eye, agent.B);
      const AreSolution sol = solve_are(a_c, b_c, p.q_block, p.r_block);
      ClusterStats stats;
      stats.index = p.index;
      stats.size = p.agents;
      stats.iterations = sol.iterations;
      stats.residual = are_residual(a_c, b_c, p.q_block, p.r_block, sol.P);
      stats.K = sol.K;
      stats.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - c0).count();
      res.clusters.push_back(std::move(stats));
    }
    std::vector<Matrix> gains;
    for (const auto& c : res.clusters) gains.push_back(c.K);
    res.K = assemble_gain(plan, gains, spec.n, spec.m);
    res.total_wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out = learned_to_json(res);
  } else {
    const Vector x0 = a.x0.empty() ? Vector(Vector::Zero(spec.N * spec.n)) : read_vector_file(a.x0);
    const Matrix k_agent = a.k0.empty() ? stabilizing_gain(agent.A, agent.B) : read_gain_file(a.k0);
    if (k_agent.rows() != spec.m || k_agent.cols() != spec.n) {
      throw Error(ErrorCode::DimensionMismatch, "--k0 must be an m x n per-agent gain");
    }
    std::vector<Matrix> k0;
    for (Index size : plan.cluster_sizes) k0.push_back(kron(Matrix::Identity(size, size), k_agent));
    auto plant = std::make_shared<AgentPlant>(std::vector<AgentModel>(spec.N, agent));
    ExcitationConfig excitation;
    excitation.seed = a.seed;
    RlConfig rl;
    rl.dt = a.dt;
    rl.tol = a.tol;
    rl.max_iter = a.max_iter;
    const HierarchicalResult res =
        hierarchical_solve(spec, plan, plant, k0, x0, excitation, a.delta, rl);
    out = learned_to_json(res);
  }
  write_json_file(a.out, out);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct RobustArgs {
  std::string plan, model, gain, x0, spec, out;
};

int run_robust(const RobustArgs& a) {
  const LqrSpec spec = spec_from_json(read_json_file(a.spec));
  spec.validate();
  const DecompositionPlan plan = plan_from_json(read_json_file(a.plan));
  const HeteroModel model = model_from_json(read_json_file(a.model));
  const Vector x0 = read_vector_file(a.x0);
  std::optional<Matrix> learned;
  if (!a.gain.empty()) learned = read_gain_file(a.gain);
  const RobustReport report = robust_report(model, plan, spec, x0, learned);
  write_json_file(a.out, report_to_json(report));
  std::cout << "LMI " << (report.lmi.pass ? "pass" : "fail") << " (max eig " << report.lmi.max_eig
            << "), small gain "
            << (report.small_gain ? (report.small_gain->pass ? "pass" : "fail") : "n/a")
            << ", closed-loop abscissa " << report.closed_loop_abscissa << "\n";
  return 0;
}

struct BenchArgs {
  Index n = 100;
  std::uint64_t seed = 1;
  double hetero = 0.0;
  double timeout_s = 300.0;
  std::string out;
  std::vector<std::string> solvers;
};

int run_bench_cmd(const BenchArgs& a) {
  BenchConfig config;
  config.N = a.n;
  config.seed = a.seed;
  config.hetero = a.hetero;
  config.mode = a.hetero > 0.0 ? BenchMode::Heterogeneous : BenchMode::Homogeneous;
  config.timeout_s = a.timeout_s;
  config.excitation.seed = a.seed;
  if (!a.solvers.empty()) {
    config.solvers.clear();
    for (const auto& s : a.solvers) {
      if (s == "model-based") {
        config.solvers.push_back(BenchSolver::ModelBased);
      } else if (s == "hierarchical-rl") {
        config.solvers.push_back(BenchSolver::HierarchicalRl);
      } else if (s == "global-rl") {
        config.solvers.push_back(BenchSolver::GlobalRl);
      } else {
        throw Error(ErrorCode::PreconditionFailed, "unknown solver " + s);
      }
    }
  }
  const BenchReport report = run_bench(config);

  std::filesystem::create_directories(a.out);
  const std::filesystem::path dir(a.out);
  write_json_file((dir / "bench.json").string(), bench_to_json(report));
  {
    std::ofstream csv(dir / "bench.csv");
    csv << bench_to_csv(report);
  }
  // Problem files so the other subcommands can be run on the same instance.
  const BenchExample ex = build_example(config);
  nlohmann::json spec = spec_to_json(ex.spec);
  spec["A"] = matrix_to_json(double_integrator(1.0, 1.0).A);
  spec["B"] = matrix_to_json(double_integrator(1.0, 1.0).B);
  write_json_file((dir / "spec.json").string(), spec);
  write_json_file((dir / "model.json").string(), model_to_json(ex.model));
  write_json_file((dir / "x0.json").string(), matrix_to_json(ex.x0));
  std::cout << bench_to_csv(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical LQR toolkit"};
  app.require_subcommand(1);

  DecomposeArgs dec;
  auto* decompose = app.add_subcommand("decompose", "build the block-diagonalizing transform T");
  decompose->add_option("--g1", dec.g1, "state weighting graph (CSV or JSON matrix)")->required();
  decompose->add_option("--g2", dec.g2, "input weighting graph (CSV or JSON matrix)")->required();
  decompose->add_option("--tol", dec.tol, "eigenvalue gap and residual tolerance");
  decompose->add_option("--out", dec.out, "plan JSON")->required();

  SolveArgs sol;
  auto* solve = app.add_subcommand("solve", "solve the cluster problems and assemble K");
  solve->add_option("--spec", sol.spec, "problem JSON with G1, G2, Q0, R0, A, B")->required();
  solve->add_option("--plan", sol.plan, "plan JSON from decompose")->required();
  solve->add_option("--mode", sol.mode, "model-based or model-free")
      ->check(CLI::IsMember({"model-based", "model-free"}));
  solve->add_option("--out", sol.out, "gain JSON")->required();
  solve->add_option("--x0", sol.x0, "initial global state (model-free)");
  solve->add_option("--k0", sol.k0, "per-agent stabilizing m x n gain (model-free)");
  solve->add_option("--seed", sol.seed, "excitation seed");
  solve->add_option("--dt", sol.dt, "integration step");
  solve->add_option("--delta", sol.delta, "regression window length");
  solve->add_option("--tol", sol.tol, "policy iteration tolerance");
  solve->add_option("--max-iter", sol.max_iter, "policy iteration limit");

  RobustArgs rob;
  auto* robust = app.add_subcommand("robust", "certify the design on a heterogeneous plant");
  robust->add_option("--plan", rob.plan, "plan JSON")->required();
  robust->add_option("--model", rob.model, "heterogeneous agents JSON")->required();
  robust->add_option("--gain", rob.gain, "learned gain to compare against");
  robust->add_option("--x0", rob.x0, "initial state")->required();
  robust->add_option("--spec", rob.spec, "problem JSON with G1, G2, Q0, R0")->required();
  robust->add_option("--out", rob.out, "report JSON")->required();

  BenchArgs ben;
  auto* bench = app.add_subcommand("bench", "double-integrator network benchmark");
  bench->add_option("--n", ben.n, "number of agents")->check(CLI::Range(2, 100000));
  bench->add_option("--seed", ben.seed, "graph, state and excitation seed");
  bench->add_option("--hetero", ben.hetero, "perturbation half-width for c_i, m_i (0 = homogeneous)")
      ->check(CLI::Range(0.0, 0.9));
  bench->add_option("--timeout-s", ben.timeout_s, "global-rl wall-clock budget");
  bench->add_option("--solvers", ben.solvers, "subset of model-based hierarchical-rl global-rl");
  bench->add_option("--out", ben.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*decompose) return run_decompose(dec);
    if (*solve) return run_solve(sol);
    if (*robust) return run_robust(rob);
    if (*bench) return run_bench_cmd(ben);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_solver_failure(e.code()) ? kExitSolver : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
