#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "hlqr/bench.hpp"

using namespace hlqr;

namespace {

BenchConfig small_config(Index N, BenchMode mode = BenchMode::Homogeneous) {
  BenchConfig config;
  config.N = N;
  config.mode = mode;
  config.timeout_s = 60;
  return config;
}

bool connected(const Matrix& lap) {
  return sym_eig(lap).values(1) > 1e-9;
}

}  // namespace

TEST(GenGraph, IsConnectedLaplacian) {
  for (Index N : {2, 5, 20, 100}) {
    const Matrix l = gen_graph(N, 7);
    ASSERT_EQ(l.rows(), N);
    EXPECT_EQ(l, l.transpose());
    EXPECT_LE(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        if (i != j) EXPECT_TRUE(l(i, j) == 0.0 || l(i, j) == -1.0);
      }
    }
    EXPECT_TRUE(connected(l)) << "N = " << N;
  }
}

TEST(GenGraph, DeterministicPerSeed) {
  EXPECT_EQ(gen_graph(30, 3), gen_graph(30, 3));
  EXPECT_NE(gen_graph(30, 3), gen_graph(30, 4));
}

TEST(GenGraph, PairIsForced) {
  Matrix expected(2, 2);
  expected << 1, -1, -1, 1;
  for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_EQ(gen_graph(2, seed), expected);
  EXPECT_THROW(gen_graph(1, 1), Error);
}

TEST(GenGraph, ConstantVectorSpansKernel) {
  const Matrix l = gen_graph(40, 9);
  EXPECT_LE((l * Vector::Ones(40)).norm(), 1e-12);
  EXPECT_GE(sym_eig(l).values(0), -1e-10);
}

TEST(DoubleIntegrator, Structure) {
  const AgentModel a = double_integrator(2.0, 4.0);
  ASSERT_EQ(a.n(), 4);
  ASSERT_EQ(a.m(), 2);
  EXPECT_EQ(a.A(0, 2), 1.0);
  EXPECT_EQ(a.A(1, 3), 1.0);
  EXPECT_EQ(a.A(2, 2), -0.5);
  EXPECT_EQ(a.A(3, 3), -0.5);
  EXPECT_EQ(a.B(2, 0), 0.25);
  EXPECT_EQ(a.B(3, 1), 0.25);
  EXPECT_EQ(a.B.topRows(2), Matrix::Zero(2, 2));
}

TEST(BuildExample, HomogeneousAndHeterogeneous) {
  BenchExample ex = build_example(small_config(6));
  EXPECT_TRUE(ex.model.homogeneous());
  EXPECT_NO_THROW(ex.spec.validate());
  ASSERT_EQ(ex.x0.size(), 24);
  for (Index i = 1; i < 6; ++i) EXPECT_EQ(ex.x0.segment(4 * i, 4), ex.x0.head(4));
  EXPECT_GE(ex.x0.minCoeff(), 0.0);
  EXPECT_LE(ex.x0.maxCoeff(), 1.0);

  BenchConfig het = small_config(6, BenchMode::Heterogeneous);
  het.hetero = 0.3;
  ex = build_example(het);
  EXPECT_FALSE(ex.model.homogeneous());
  for (const AgentModel& a : ex.model.agents) {
    const double inv_mass = a.B(2, 0);
    EXPECT_GE(inv_mass, 1.0 / 1.3 - 1e-12);
    EXPECT_LE(inv_mass, 1.0 / 0.7 + 1e-12);
  }
  EXPECT_EQ(build_example(het).model.A(), ex.model.A());

  het.hetero = 0.0;
  const BenchExample flat = build_example(het);
  EXPECT_TRUE(flat.model.homogeneous());
  EXPECT_EQ(flat.model.A(), build_example(small_config(6)).model.A());
}

TEST(InitialGain, StabilizesTrueAgentRange) {
  const Matrix k = initial_agent_gain();
  for (double c : {0.5, 1.0, 1.5}) {
    for (double mass : {0.5, 1.0, 1.5}) {
      const AgentModel a = double_integrator(c, mass);
      EXPECT_LT(spectral_abscissa(a.A - a.B * k), 0.0) << c << " " << mass;
    }
  }
}

TEST(RunBench, SolversAgreeOnSmallNetwork) {
  const BenchReport report = run_bench(small_config(3));
  ASSERT_EQ(report.rows.size(), 3u);
  const BenchRow* opt = report.row(BenchSolver::ModelBased);
  const BenchRow* hrl = report.row(BenchSolver::HierarchicalRl);
  const BenchRow* glob = report.row(BenchSolver::GlobalRl);
  ASSERT_TRUE(opt && hrl && glob);
  for (const BenchRow* row : {opt, hrl, glob}) {
    EXPECT_EQ(row->status, "ok") << row->solver << ": " << row->message;
    EXPECT_LE(std::abs(row->J - report.J_opt), 1e-3 * report.J_opt) << row->solver;
  }
  EXPECT_LE(hrl->gain_gap_fro, 1e-2 * opt->K.norm());
  EXPECT_EQ(opt->gain_gap_fro, 0.0);
}

TEST(RunBench, Reproducible) {
  BenchConfig config = small_config(3);
  config.solvers = {BenchSolver::HierarchicalRl};
  EXPECT_EQ(run_bench(config).rows[0].K, run_bench(config).rows[0].K);
}

TEST(RunBench, CubicCostShrinksWithClusters) {
  BenchConfig config = small_config(8);
  config.solvers = {BenchSolver::ModelBased, BenchSolver::HierarchicalRl};
  const BenchReport report = run_bench(config);
  ASSERT_GT(report.cluster_sizes.size(), 1u);
  double expected = 0.0;
  for (Index s : report.cluster_sizes) expected += std::pow(4.0 * s, 3);
  EXPECT_DOUBLE_EQ(report.hierarchical_cubic, expected);
  EXPECT_DOUBLE_EQ(report.global_cubic, std::pow(32.0, 3));
  EXPECT_LT(report.hierarchical_cubic, report.global_cubic);
}

TEST(RunBench, GlobalLearnerRespectsBudgets) {
  BenchConfig config = small_config(4);
  config.solvers = {BenchSolver::GlobalRl};
  config.timeout_s = 1e-9;
  EXPECT_EQ(run_bench(config).rows[0].status, "timeout");
  config.timeout_s = 60;
  config.rl.memory_budget_bytes = 1024;
  EXPECT_EQ(run_bench(config).rows[0].status, "budget_exceeded");
}

TEST(RunBench, HeterogeneousLearnerStabilizes) {
  BenchConfig config = small_config(4, BenchMode::Heterogeneous);
  config.solvers = {BenchSolver::ModelBased, BenchSolver::HierarchicalRl};
  const BenchReport report = run_bench(config);
  const BenchRow* hrl = report.row(BenchSolver::HierarchicalRl);
  ASSERT_TRUE(hrl);
  EXPECT_EQ(hrl->status, "ok") << hrl->message;
  EXPECT_TRUE(std::isfinite(hrl->J));
  EXPECT_GE(hrl->J, report.J_opt * (1 - 1e-9));
}

TEST(BenchOutput, CsvAndJson) {
  BenchConfig config = small_config(3);
  config.solvers = {BenchSolver::ModelBased};
  const BenchReport report = run_bench(config);
  const std::string csv = bench_to_csv(report);
  std::istringstream lines(csv);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header, "solver,wall_ms,J,gain_gap_fro,status");
  EXPECT_EQ(first.rfind(to_string(BenchSolver::ModelBased), 0), 0u);
  const nlohmann::json j = bench_to_json(report);
  EXPECT_EQ(j.at("N").get<int>(), 3);
  EXPECT_EQ(j.at("rows").size(), 1u);
}
