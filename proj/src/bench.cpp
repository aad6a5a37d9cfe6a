#include "hlqr/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "hlqr/lqr.hpp"

namespace hlqr {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string status_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::BudgetExceeded: return "budget_exceeded";
    default: return to_string(e.code());
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

const char* to_string(BenchSolver solver) {
  switch (solver) {
    case BenchSolver::ModelBased: return "model-based";
    case BenchSolver::HierarchicalRl: return "hierarchical-rl";
    case BenchSolver::GlobalRl: return "global-rl";
  }
  return "unknown";
}

void BenchConfig::validate() const {
  if (N < 2) throw Error(ErrorCode::PreconditionFailed, "bench needs N >= 2");
  if (!(hetero >= 0.0 && hetero <= 0.9)) {
    throw Error(ErrorCode::PreconditionFailed, "hetero must lie in [0, 0.9]");
  }
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::PreconditionFailed, "timeout must be positive");
  excitation.validate();
}

Matrix gen_graph(Index N, std::uint64_t seed) {
  if (N < 2) throw Error(ErrorCode::PreconditionFailed, "graph needs at least two nodes");
  const double n = static_cast<double>(N);
  const double p = std::min(1.0, 2.0 * std::log(n) / n);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Matrix adj = Matrix::Zero(N, N);
    for (Index i = 0; i < N; ++i) {
      for (Index j = i + 1; j < N; ++j) {
        if (edge(rng)) adj(i, j) = adj(j, i) = 1.0;
      }
    }
    if (support_partition(adj, 0.5).size() != 1) continue;
    Matrix lap = -adj;
    lap.diagonal() = adj.rowwise().sum();
    return lap;
  }
  throw Error(ErrorCode::GenerationFailed, "no connected graph in 100 draws");
}

AgentModel double_integrator(double c, double mass) {
  const Matrix eye = Matrix::Identity(2, 2);
  AgentModel agent{Matrix::Zero(4, 4), Matrix::Zero(4, 2)};
  agent.A.topRightCorner(2, 2) = eye;
  agent.A.bottomRightCorner(2, 2) = -(c / mass) * eye;
  agent.B.bottomRows(2) = (1.0 / mass) * eye;
  return agent;
}

BenchExample build_example(const BenchConfig& config) {
  config.validate();
  BenchExample ex;
  const Index N = config.N;
  const Matrix lap = gen_graph(N, config.seed);
  ex.spec = LqrSpec{N,
                    4,
                    2,
                    0.5 * Matrix::Identity(N, N) + lap,
                    Matrix::Identity(N, N),
                    Matrix::Identity(4, 4),
                    Matrix::Identity(2, 2)};

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector w(4);
  for (Index i = 0; i < 4; ++i) w(i) = unit(rng);
  ex.x0 = kron(Vector::Ones(N), w);

  for (Index i = 0; i < N; ++i) {
    double c = 1.0, mass = 1.0;
    if (config.mode == BenchMode::Heterogeneous) {
      c = 1.0 + config.hetero * (2.0 * unit(rng) - 1.0);
      mass = 1.0 + config.hetero * (2.0 * unit(rng) - 1.0);
    }
    ex.model.agents.push_back(double_integrator(c, mass));
  }
  return ex;
}

Matrix initial_agent_gain() {
  // c/m = 1.2 and 1/m = 0.8 where the true agents have 1 and 1.
  const AgentModel wrong = double_integrator(1.2 / 0.8, 1.0 / 0.8);
  return stabilizing_gain(wrong.A, wrong.B);
}

const BenchRow* BenchReport::row(BenchSolver solver) const {
  for (const auto& r : rows) {
    if (r.solver == to_string(solver)) return &r;
  }
  return nullptr;
}

BenchReport run_bench(const BenchConfig& config) {
  const BenchExample ex = build_example(config);
  const LqrSpec& spec = ex.spec;
  const Matrix ah = ex.model.A();
  const Matrix bh = ex.model.B();
  const Matrix q = spec.Q();
  const Matrix r = spec.R();
  auto plant = std::make_shared<AgentPlant>(ex.model.agents);
  const Matrix k_agent = initial_agent_gain();

  BenchReport report;
  report.config = config;

  auto cost_of = [&](const Matrix& k, BenchRow& row) {
    const Matrix acl = ah - bh * k;
    if (!(spectral_abscissa(acl) < 0.0)) {
      row.status = "unstable";
      row.J = std::numeric_limits<double>::infinity();
      return;
    }
    row.J = evaluate_cost(acl, q + k.transpose() * r * k, ex.x0);
  };

  // The optimum is always computed since every row reports its gap to it.
  BenchRow opt_row;
  opt_row.solver = to_string(BenchSolver::ModelBased);
  {
    const auto t0 = Clock::now();
    opt_row.K = solve_are(ah, bh, q, r).K;
    opt_row.wall_ms = elapsed_ms(t0);
    opt_row.status = "ok";
    cost_of(opt_row.K, opt_row);
  }
  report.J_opt = opt_row.J;

  auto learn = [&](const DecompositionPlan& plan, RlConfig rl, BenchRow& row,
                   Clock::time_point t0) {
    std::vector<Matrix> k0;
    for (Index size : plan.cluster_sizes) {
      k0.push_back(kron(Matrix::Identity(size, size), k_agent));
    }
    try {
      HierarchicalResult res = hierarchical_solve(spec, plan, plant, k0, ex.x0, config.excitation,
                                                  config.sample_interval, rl);
      row.wall_ms = elapsed_ms(t0);
      row.K = std::move(res.K);
      row.status = "ok";
      row.gain_gap_fro = (row.K - opt_row.K).norm();
      cost_of(row.K, row);
    } catch (const Error& e) {
      row.wall_ms = elapsed_ms(t0);
      row.status = status_of(e);
      row.message = e.what();
      row.J = std::numeric_limits<double>::quiet_NaN();
      row.gain_gap_fro = std::numeric_limits<double>::quiet_NaN();
    }
  };

  for (BenchSolver solver : config.solvers) {
    BenchRow row;
    row.solver = to_string(solver);
    if (solver == BenchSolver::ModelBased) {
      report.rows.push_back(opt_row);
      continue;
    }
    const auto t0 = Clock::now();
    RlConfig rl = config.rl;
    if (solver == BenchSolver::HierarchicalRl) {
      const DecompositionPlan plan = construct_T(spec.G1, spec.G2);
      report.cluster_sizes = plan.cluster_sizes;
      learn(plan, rl, row, t0);
    } else {
      rl.deadline = t0 + std::chrono::duration_cast<Clock::duration>(
                             std::chrono::duration<double>(config.timeout_s));
      learn(trivial_plan(spec.G1, spec.G2), rl, row, t0);
    }
    report.rows.push_back(std::move(row));
  }

  const double n = static_cast<double>(spec.n);
  report.global_cubic = std::pow(n * static_cast<double>(spec.N), 3);
  for (Index size : report.cluster_sizes) {
    report.hierarchical_cubic += std::pow(n * static_cast<double>(size), 3);
  }
  return report;
}

nlohmann::json bench_to_json(const BenchReport& report) {
  const BenchConfig& c = report.config;
  auto number = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = {{"solver", r.solver},
                          {"wallMs", r.wall_ms},
                          {"J", number(r.J)},
                          {"gainGapFro", number(r.gain_gap_fro)},
                          {"status", r.status}};
    if (!r.message.empty()) row["message"] = r.message;
    rows.push_back(std::move(row));
  }
  return {{"N", c.N},
          {"seed", c.seed},
          {"mode", c.mode == BenchMode::Homogeneous ? "homogeneous" : "heterogeneous"},
          {"hetero", c.mode == BenchMode::Homogeneous ? 0.0 : c.hetero},
          {"timeoutS", c.timeout_s},
          {"Jopt", number(report.J_opt)},
          {"clusterSizes", report.cluster_sizes},
          {"hierarchicalCubic", report.hierarchical_cubic},
          {"globalCubic", report.global_cubic},
          {"rows", std::move(rows)}};
}

std::string bench_to_csv(const BenchReport& report) {
  std::string out = "solver,wall_ms,J,gain_gap_fro,status\n";
  for (const auto& r : report.rows) {
    out += r.solver + "," + format_number(r.wall_ms) + "," + format_number(r.J) + "," +
           format_number(r.gain_gap_fro) + "," + r.status + "\n";
  }
  return out;
}

}  // namespace hlqr
