#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hlqr/decomp.hpp"
#include "hlqr/robust.hpp"
#include "test_util.hpp"

using namespace hlqr;
using hlqr::testing::random_laplacian;
using hlqr::testing::random_matrix;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

LtiSystem siso(double a, double b, double c, double d = 0.0) {
  return LtiSystem{scalar(a), scalar(b), scalar(c), d == 0.0 ? Matrix() : scalar(d)};
}

struct Network {
  HeteroModel model;
  LqrSpec spec;
  DecompositionPlan plan;
};

// Scalar agents x_i' = a_i x_i + u_i weighted by G1 = [[2,-1],[-1,2]].
Network scalar_pair(double a1, double a2) {
  Network s;
  s.model.agents = {AgentModel{scalar(a1), scalar(1)}, AgentModel{scalar(a2), scalar(1)}};
  s.spec = LqrSpec{2, 1, 1, mat2(2, -1, -1, 2), Matrix::Identity(2, 2), scalar(1), scalar(1)};
  s.plan = construct_T(s.spec.G1, s.spec.G2);
  return s;
}

// N damped two-state agents with parameters spread by `spread` around a base.
Network damped_network(std::mt19937_64& rng, Index N, double spread) {
  Network s;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index i = 0; i < N; ++i) {
    Matrix a = mat2(0, 1, -1, -1);
    a(1, 0) *= 1 + spread * u(rng);
    a(1, 1) *= 1 + spread * u(rng);
    Matrix b(2, 1);
    b << 0, 1 + spread * u(rng);
    s.model.agents.push_back(AgentModel{a, b});
  }
  s.spec = LqrSpec{N, 2, 1, 0.5 * Matrix::Identity(N, N) + random_laplacian(rng, N),
                   Matrix::Identity(N, N), Matrix::Identity(2, 2), scalar(1)};
  s.plan = construct_T(s.spec.G1, s.spec.G2);
  return s;
}

double grid_peak(const LtiSystem& sys, int points, double lo, double hi) {
  double peak = frequency_gain(sys, 0.0);
  for (int k = 0; k < points; ++k) {
    const double w = std::pow(10.0, lo + (hi - lo) * k / (points - 1));
    peak = std::max(peak, frequency_gain(sys, w));
  }
  return peak;
}

}  // namespace

TEST(HeteroLift, HomogeneousHasNoResidual) {
  std::mt19937_64 rng(1);
  Network s = damped_network(rng, 4, 0.0);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const double scale = s.model.A().norm();
  EXPECT_LE(lift.A_tilde.norm(), 1e-12 * scale);
  EXPECT_LE(lift.B_tilde.norm(), 1e-12 * scale);
  EXPECT_TRUE(is_hurwitz(lift.A_hat));
}

TEST(HeteroLift, ScalarPairResidual) {
  const Network s = scalar_pair(-1.0, -0.8);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  EXPECT_NEAR(lift.A_tilde(0, 0), -0.1, 1e-12);
  EXPECT_NEAR(lift.A_tilde(1, 1), 0.1, 1e-12);
  EXPECT_NEAR(std::abs(lift.A_tilde(0, 1)), 0.1, 1e-12);
  EXPECT_NEAR(lift.A_tilde(0, 1), lift.A_tilde(1, 0), 1e-15);
  EXPECT_LE(lift.B_tilde.norm(), 1e-12);
}

TEST(HeteroLift, RejectsUncontrollable) {
  Network s = scalar_pair(-1.0, -0.8);
  s.model.agents[1].B = scalar(0);
  try {
    hetero_lift(s.model, s.plan, s.spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PreconditionFailed);
  }
}

TEST(Lmi, HomogeneousPasses) {
  std::mt19937_64 rng(2);
  const Network s = damped_network(rng, 3, 0.0);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const LmiResult lmi = lmi_stability_check(lift.A_tilde, lift.B_tilde, lift.P_hat, s.spec.Q(),
                                            s.spec.R(), lift.B_hat);
  EXPECT_TRUE(lmi.pass);
  EXPECT_LT(lmi.max_eig, 0.0);
}

TEST(Lmi, SmallScalarHeterogeneity) {
  const Network s = scalar_pair(-1.1, -0.9);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const LmiResult lmi = lmi_stability_check(lift.A_tilde, lift.B_tilde, lift.P_hat, s.spec.Q(),
                                            s.spec.R(), lift.B_hat);
  EXPECT_TRUE(lmi.pass);
  EXPECT_LT(spectral_abscissa(s.model.A() - s.model.B() * lift.K), 0.0);
}

TEST(Lmi, EqualsClosedLoopLyapunovForm) {
  std::mt19937_64 rng(3);
  const Network s = damped_network(rng, 3, 0.3);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const Matrix acl = s.model.A() - s.model.B() * lift.K;
  const Matrix direct = symmetrize(lift.P_hat * acl + acl.transpose() * lift.P_hat);
  const LmiResult lmi = lmi_stability_check(lift.A_tilde, lift.B_tilde, lift.P_hat, s.spec.Q(),
                                            s.spec.R(), lift.B_hat);
  EXPECT_NEAR(lmi.max_eig, sym_eig(direct).values.maxCoeff(), 1e-8 * direct.norm());
}

TEST(Lmi, SweepNeverPassesUnstableLoop) {
  // Push agent 2 further from agent 1 until the closed loop breaks.
  bool saw_unstable = false, saw_fail = false;
  for (double a2 = -1.0; a2 <= 12.0; a2 += 0.25) {
    const Network s = scalar_pair(-1.0, a2);
    HeteroLift lift;
    try {
      lift = hetero_lift(s.model, s.plan, s.spec);
    } catch (const Error&) {
      continue;
    }
    const LmiResult lmi = lmi_stability_check(lift.A_tilde, lift.B_tilde, lift.P_hat, s.spec.Q(),
                                              s.spec.R(), lift.B_hat);
    const bool stable = spectral_abscissa(s.model.A() - s.model.B() * lift.K) < 0.0;
    if (lmi.pass) EXPECT_TRUE(stable) << "a2 = " << a2;
    saw_unstable = saw_unstable || !stable;
    saw_fail = saw_fail || !lmi.pass;
  }
  EXPECT_TRUE(saw_fail);
  EXPECT_TRUE(saw_unstable);
}

TEST(Hinf, FirstOrderLags) {
  EXPECT_NEAR(hinf_norm(siso(-1, 1, 1)), 1.0, 1e-8);
  EXPECT_NEAR(hinf_norm(siso(-4, 2, 1)), 0.5, 1e-8);
  const HinfBounds b = hinf_bounds(siso(-1, 1, 1));
  EXPECT_LE(b.lower, b.upper);
  EXPECT_LE(b.upper - b.lower, 1e-7);
}

TEST(Hinf, LightlyDampedOscillator) {
  LtiSystem sys{mat2(0, 1, -1, -0.1), Matrix(2, 1), Matrix(1, 2), Matrix()};
  sys.B << 0, 1;
  sys.C << 1, 0;
  const double zeta = 0.05;
  const double exact = 1.0 / (2 * zeta * std::sqrt(1 - zeta * zeta));
  const HinfBounds b = hinf_bounds(sys);
  EXPECT_NEAR(b.lower, exact, 1e-7 * exact);
  EXPECT_NEAR(b.peak_frequency, std::sqrt(1 - 2 * zeta * zeta), 1e-3);
  // Dense grid around the resonance.
  const double grid = grid_peak(sys, 1000000, -3, 3);
  EXPECT_GE(b.upper, grid * (1 - 1e-8));
  EXPECT_LE(b.lower - grid, 1e-6 * exact);
}

TEST(Hinf, Feedthrough) {
  // (s + 2) / (s + 1) peaks at DC with gain 2.
  EXPECT_NEAR(hinf_norm(siso(-1, 1, 1, 1)), 2.0, 1e-8);
}

TEST(Hinf, UpperBoundDominatesGrid) {
  std::mt19937_64 rng(11);
  for (int draw = 0; draw < 10; ++draw) {
    LtiSystem sys{random_matrix(rng, 4, 4), random_matrix(rng, 4, 2), random_matrix(rng, 3, 4),
                  Matrix()};
    sys.A -= (spectral_abscissa(sys.A) + 0.2) * Matrix::Identity(4, 4);
    const HinfBounds b = hinf_bounds(sys);
    const double grid = grid_peak(sys, 10000, -3, 3);
    EXPECT_GE(b.upper, grid * (1 - 1e-8));
    EXPECT_LE(b.lower, b.upper);
    EXPECT_LE(b.upper, b.lower * (1 + 1e-6));
  }
}

TEST(Hinf, RequiresHurwitz) {
  try {
    hinf_norm(siso(0.5, 1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotHurwitz);
  }
}

TEST(H2, FirstOrderLag) {
  for (double a : {0.5, 1.0, 3.0}) EXPECT_NEAR(h2_norm(siso(-a, 1, 1)), std::sqrt(0.5 / a), 1e-12);
}

TEST(H2, MatchesFrequencyQuadrature) {
  std::mt19937_64 rng(7);
  LtiSystem sys{random_matrix(rng, 3, 3), random_matrix(rng, 3, 2), random_matrix(rng, 2, 3),
                Matrix()};
  sys.A -= (spectral_abscissa(sys.A) + 0.5) * Matrix::Identity(3, 3);
  // (1/2pi) int ||G(jw)||_F^2 dw with w = tan(theta) and composite Simpson.
  const int intervals = 200000;
  const double lo = -std::numbers::pi / 2, hi = std::numbers::pi / 2;
  const double h = (hi - lo) / intervals;
  auto f = [&](double theta) {
    const double c = std::cos(theta);
    if (std::abs(c) < 1e-12) return 0.0;
    const double w = std::tan(theta);
    const Eigen::MatrixXcd g =
        sys.C.cast<std::complex<double>>() *
        (std::complex<double>(0, w) * Eigen::MatrixXcd::Identity(3, 3) -
         sys.A.cast<std::complex<double>>())
            .partialPivLu()
            .solve(sys.B.cast<std::complex<double>>());
    return g.squaredNorm() / (c * c);
  };
  double sum = f(lo) + f(hi);
  for (int k = 1; k < intervals; ++k) sum += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  const double quad = std::sqrt(sum * h / 3 / (2 * std::numbers::pi));
  EXPECT_NEAR(h2_norm(sys), quad, 1e-4);
}

TEST(H2, Preconditions) {
  try {
    h2_norm(siso(-1, 1, 1, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonzeroFeedthrough);
  }
  EXPECT_THROW(h2_norm(siso(1, 1, 1)), Error);
  EXPECT_EQ(h2_norm(siso(-1, 0, 1)), 0.0);
}

TEST(SmallGain, HomogeneousIsTrivial) {
  std::mt19937_64 rng(5);
  const Network s = damped_network(rng, 3, 0.0);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const SmallGainResult sg =
      small_gain_check(s.model, lift.K, lift.A_hat, lift.A_tilde, lift.B_tilde);
  EXPECT_LE(sg.lhs, 1e-10);
  EXPECT_GT(sg.rhs, 0.0);
  EXPECT_TRUE(sg.pass);
}

TEST(SmallGain, ScalarPairPassesAndIsStable) {
  const Network s = scalar_pair(-1.1, -0.9);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const SmallGainResult sg =
      small_gain_check(s.model, lift.K, lift.A_hat, lift.A_tilde, lift.B_tilde);
  EXPECT_TRUE(sg.pass);
  EXPECT_LT(spectral_abscissa(s.model.A() - s.model.B() * lift.K), 0.0);
}

TEST(SmallGain, UnstableOpenLoopIsOutOfScope) {
  HeteroModel model;
  Matrix b(2, 1);
  b << 0, 1;
  model.agents = {AgentModel{mat2(0, 1, 0, 0), b}, AgentModel{mat2(0, 1, 0, 0), 1.1 * b}};
  LqrSpec spec{2, 2, 1, mat2(2, -1, -1, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2),
               scalar(1)};
  const DecompositionPlan plan = construct_T(spec.G1, spec.G2);
  const HeteroLift lift = hetero_lift(model, plan, spec);
  try {
    small_gain_check(model, lift.K, lift.A_hat, lift.A_tilde, lift.B_tilde);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotHurwitz);
  }
}

TEST(PerformanceBound, HomogeneousCollapses) {
  std::mt19937_64 rng(6);
  const Network s = damped_network(rng, 3, 0.0);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const Vector x0 = Vector::Ones(6);
  const PerformanceBound pb = performance_bound(s.model, lift.K, s.plan, s.spec, x0);
  EXPECT_LE(pb.epsilon, 1e-10);
  EXPECT_NEAR(pb.bound, pb.j2_bar, 1e-9 * pb.j2_bar);
  EXPECT_NEAR(pb.actual_j2, pb.j2_bar, 1e-8 * pb.j2_bar);
  EXPECT_TRUE(pb.holds);
}

TEST(PerformanceBound, ScalarPair) {
  const Network s = scalar_pair(-1.1, -0.9);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const PerformanceBound pb = performance_bound(s.model, lift.K, s.plan, s.spec, Vector::Ones(2));
  EXPECT_GT(pb.epsilon, 0.0);
  EXPECT_LE(pb.actual_j2, pb.bound * (1 + 1e-6));
  EXPECT_TRUE(pb.holds);
}

TEST(PerformanceBound, ZeroInitialState) {
  const Network s = scalar_pair(-1.1, -0.9);
  const HeteroLift lift = hetero_lift(s.model, s.plan, s.spec);
  const PerformanceBound pb = performance_bound(s.model, lift.K, s.plan, s.spec, Vector::Zero(2));
  EXPECT_EQ(pb.j2_bar, 0.0);
  EXPECT_EQ(pb.actual_j2, 0.0);
  EXPECT_GE(pb.bound, 0.0);
  EXPECT_NEAR(pb.bound, pb.alpha * pb.epsilon, 1e-15);
}

TEST(RobustReport, JsonCarriesVerdicts) {
  const Network s = scalar_pair(-1.1, -0.9);
  const RobustReport report = robust_report(s.model, s.plan, s.spec, Vector::Ones(2));
  EXPECT_LT(report.closed_loop_abscissa, 0.0);
  ASSERT_TRUE(report.small_gain.has_value());
  ASSERT_TRUE(report.performance.has_value());
  const nlohmann::json j = report_to_json(report);
  const std::string text = j.dump();
  EXPECT_NE(text.find("lmiPass"), std::string::npos);
  EXPECT_NE(text.find("smallGainLhs"), std::string::npos);
  EXPECT_FALSE(report.learned_gain_gap.has_value());

  const RobustReport with_learned =
      robust_report(s.model, s.plan, s.spec, Vector::Ones(2), report.lift.K);
  ASSERT_TRUE(with_learned.learned_gain_gap.has_value());
  EXPECT_NEAR(*with_learned.learned_gain_gap, 0.0, 1e-15);
}

TEST(HeteroModelJson, RoundTrip) {
  const Network s = scalar_pair(-1.1, -0.9);
  const HeteroModel back = model_from_json(nlohmann::json::parse(model_to_json(s.model).dump()));
  ASSERT_EQ(back.N(), 2);
  EXPECT_EQ(back.A(), s.model.A());
  EXPECT_FALSE(back.homogeneous());
}
