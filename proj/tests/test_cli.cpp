#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d =
        fs::temp_directory_path() / ("hlqr_test_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write(const std::string& name, const std::string& text) {
  std::ofstream(work_dir() / name) << text;
}

int run(const std::string& args) {
  const std::string cmd = std::string(HLQR_CLI_PATH) + " " + args + " > " + path("stdout.txt") +
                          " 2> " + path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json load(const std::string& name) {
  std::ifstream in(work_dir() / name);
  return nlohmann::json::parse(in);
}

// Two integrators x_i' = u_i weighted by G1 = [[2,-1],[-1,2]], G2 = I.
void write_pair_problem() {
  write("g1.csv", "2,-1\n-1,2\n");
  write("g2.csv", "1,0\n0,1\n");
  const auto m = [](int r, int c, std::vector<double> d) {
    return nlohmann::json{{"rows", r}, {"cols", c}, {"data", d}};
  };
  nlohmann::json spec = {{"N", 2},
                         {"n", 1},
                         {"m", 1},
                         {"G1", m(2, 2, {2, -1, -1, 2})},
                         {"G2", m(2, 2, {1, 0, 0, 1})},
                         {"Q0", m(1, 1, {1})},
                         {"R0", m(1, 1, {1})},
                         {"A", m(1, 1, {-1})},
                         {"B", m(1, 1, {1})}};
  write("spec.json", spec.dump());
  nlohmann::json model = {{"agents",
                           {{{"A", m(1, 1, {-1.1})}, {"B", m(1, 1, {1})}},
                            {{"A", m(1, 1, {-0.9})}, {"B", m(1, 1, {1})}}}}};
  write("model.json", model.dump());
  write("x0.json", "[1, 1]");
  write("k0.csv", "1.5\n");
}

std::vector<double> gain_data(const nlohmann::json& j) {
  return j.at("K").at("data").get<std::vector<double>>();
}

}  // namespace

TEST(Cli, DecomposeWritesPlan) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  const auto plan = load("plan.json");
  EXPECT_EQ(plan.at("r").get<int>(), 2);
  EXPECT_TRUE(plan.at("decomposable").get<bool>());
}

TEST(Cli, DecomposeRejectsAsymmetricWeight) {
  write("bad.csv", "2,-1\n0,2\n");
  write("g2.csv", "1,0\n0,1\n");
  EXPECT_EQ(run("decompose --g1 " + path("bad.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("bad_plan.json")),
            2);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("decompose --g1 " + path("g1.csv")), 2);
  EXPECT_EQ(run("solve --spec " + path("missing.json") + " --plan " + path("missing.json") +
                " --out " + path("x.json")),
            2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, SolveModelBased) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  ASSERT_EQ(run("solve --spec " + path("spec.json") + " --plan " + path("plan.json") +
                " --mode model-based --out " + path("gains.json")),
            0);
  const auto out = load("gains.json");
  EXPECT_EQ(out.at("perCluster").size(), 2u);
  // Per eigen-direction: scalar ARE -2p + phi - p^2 = 0 gives p = sqrt(1 + phi) - 1.
  const auto k = gain_data(out);
  const double k1 = std::sqrt(2.0) - 1, k3 = 1.0;
  EXPECT_NEAR(k[0], (k1 + k3) / 2, 1e-9);
  EXPECT_NEAR(k[1], (k1 - k3) / 2, 1e-9);
}

TEST(Cli, SolveModelFree) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  ASSERT_EQ(run("solve --spec " + path("spec.json") + " --plan " + path("plan.json") +
                " --mode model-free --x0 " + path("x0.json") + " --k0 " + path("k0.csv") +
                " --out " + path("learned.json")),
            0);
  const auto k = gain_data(load("learned.json"));
  const double k1 = std::sqrt(2.0) - 1, k3 = 1.0;
  EXPECT_NEAR(k[0], (k1 + k3) / 2, 1e-3);
  EXPECT_NEAR(k[1], (k1 - k3) / 2, 1e-3);
}

TEST(Cli, SolverDivergenceExitsThree) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  EXPECT_EQ(run("solve --spec " + path("spec.json") + " --plan " + path("plan.json") +
                " --mode model-free --max-iter 1 --k0 " + path("k0.csv") + " --out " +
                path("never.json")),
            3);
}

TEST(Cli, RobustReport) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  ASSERT_EQ(run("robust --plan " + path("plan.json") + " --model " + path("model.json") +
                " --x0 " + path("x0.json") + " --spec " + path("spec.json") + " --out " +
                path("report.json")),
            0);
  const auto report = load("report.json");
  EXPECT_TRUE(report.at("lmiPass").get<bool>());
  EXPECT_TRUE(report.at("closedLoopStable").get<bool>());
}

TEST(Cli, BenchWritesTables) {
  const std::string dir = path("bench");
  ASSERT_EQ(run("bench --n 3 --seed 2 --solvers model-based hierarchical-rl --out " + dir), 0);
  for (const char* f : {"bench.json", "bench.csv", "spec.json", "model.json", "x0.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(dir) / f)) << f;
  }
  const auto j = load("bench/bench.json");
  EXPECT_EQ(j.at("rows").size(), 2u);
  EXPECT_EQ(run("bench --n 1 --out " + dir), 2);
}

TEST(Cli, ThreadCapIsAccepted) {
  write_pair_problem();
  ASSERT_EQ(run("decompose --g1 " + path("g1.csv") + " --g2 " + path("g2.csv") + " --out " +
                path("plan.json")),
            0);
  const std::string learn = "solve --spec " + path("spec.json") + " --plan " + path("plan.json") +
                            " --mode model-free --x0 " + path("x0.json") + " --k0 " +
                            path("k0.csv") + " --out ";
  ASSERT_EQ(run(learn + path("free.json")), 0);
  ::setenv("HLQR_THREADS", "1", 1);
  const int code = run(learn + path("capped.json"));
  ::unsetenv("HLQR_THREADS");
  ASSERT_EQ(code, 0);
  EXPECT_EQ(gain_data(load("capped.json")), gain_data(load("free.json")));
}
