#include "hlqr/robust.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "hlqr/matrix_io.hpp"

namespace hlqr {

namespace {

using CMatrix = Eigen::MatrixXcd;

Matrix feedthrough(const LtiSystem& sys) {
  return sys.D.size() > 0 ? sys.D : Matrix::Zero(sys.C.rows(), sys.B.cols());
}

double sigma_max(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

void require_hurwitz(const Matrix& a, const char* what) {
  const double abscissa = spectral_abscissa(a);
  if (!(abscissa < 0.0)) {
    throw Error(ErrorCode::NotHurwitz,
                std::string(what) + " is not Hurwitz (abscissa " + std::to_string(abscissa) + ")");
  }
}

Matrix hamiltonian(const LtiSystem& sys, const Matrix& d, double gamma) {
  const Index n = sys.A.rows();
  const Index mi = sys.B.cols();
  const Matrix r = gamma * gamma * Matrix::Identity(mi, mi) - d.transpose() * d;
  Eigen::LLT<Matrix> llt(r);
  const Matrix r_dc = llt.solve(d.transpose() * sys.C);
  const Matrix r_bt = llt.solve(sys.B.transpose());
  const Matrix f = sys.A + sys.B * r_dc;
  Matrix h(2 * n, 2 * n);
  h << f, sys.B * r_bt, -(sys.C.transpose() * sys.C + sys.C.transpose() * d * r_dc),
      -f.transpose();
  return h;
}

}  // namespace

Matrix HeteroModel::A() const {
  std::vector<Matrix> blocks;
  for (const auto& a : agents) blocks.push_back(a.A);
  return block_diag(blocks);
}

Matrix HeteroModel::B() const {
  std::vector<Matrix> blocks;
  for (const auto& a : agents) blocks.push_back(a.B);
  return block_diag(blocks);
}

void HeteroModel::validate() const {
  if (agents.empty()) throw Error(ErrorCode::DimensionMismatch, "model has no agents");
  for (const auto& a : agents) {
    a.validate();
    if (a.n() != n() || a.m() != m()) {
      throw Error(ErrorCode::DimensionMismatch, "agents must share state and input dimensions");
    }
  }
}

bool HeteroModel::homogeneous() const {
  for (const auto& a : agents) {
    if (a.A != agents.front().A || a.B != agents.front().B) return false;
  }
  return true;
}

nlohmann::json model_to_json(const HeteroModel& model) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : model.agents) {
    agents.push_back({{"A", matrix_to_json(a.A)}, {"B", matrix_to_json(a.B)}});
  }
  return {{"agents", std::move(agents)}};
}

HeteroModel model_from_json(const nlohmann::json& j) {
  HeteroModel model;
  try {
    for (const auto& a : j.at("agents")) {
      model.agents.push_back({matrix_from_json(a.at("A")), matrix_from_json(a.at("B"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model JSON: ") + e.what());
  }
  model.validate();
  return model;
}

void LtiSystem::validate() const {
  const Index n = A.rows();
  if (A.cols() != n || B.rows() != n || C.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "state-space matrices do not conform");
  }
  if (D.size() > 0 && (D.rows() != C.rows() || D.cols() != B.cols())) {
    throw Error(ErrorCode::DimensionMismatch, "D must be outputs x inputs");
  }
}

double frequency_gain(const LtiSystem& sys, double omega) {
  CMatrix m = -sys.A.cast<std::complex<double>>();
  m.diagonal().array() += std::complex<double>(0.0, omega);
  const CMatrix x = m.partialPivLu().solve(sys.B.cast<std::complex<double>>());
  CMatrix g = sys.C.cast<std::complex<double>>() * x;
  if (sys.D.size() > 0) g += sys.D.cast<std::complex<double>>();
  if (g.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(g);
  return svd.singularValues()(0);
}

HinfBounds hinf_bounds(const LtiSystem& sys, double tol) {
  sys.validate();
  require_hurwitz(sys.A, "A");
  const Matrix d = feedthrough(sys);
  const double d_gain = sigma_max(d);
  HinfBounds out;
  if (sys.B.norm() == 0.0 || sys.C.norm() == 0.0) {
    out.lower = out.upper = d_gain;
    return out;
  }

  // Starting level: DC gain, feedthrough and the gains at the pole frequencies.
  out.lower = frequency_gain(sys, 0.0);
  if (d_gain > out.lower) {
    out.lower = d_gain;
    out.peak_frequency = std::numeric_limits<double>::infinity();
  }
  Eigen::EigenSolver<Matrix> poles(sys.A, false);
  for (Index i = 0; i < poles.eigenvalues().size(); ++i) {
    const double w = std::abs(poles.eigenvalues()(i).imag());
    if (w == 0.0) continue;
    const double g = frequency_gain(sys, w);
    if (g > out.lower) {
      out.lower = g;
      out.peak_frequency = w;
    }
  }
  if (out.lower == 0.0) out.lower = std::numeric_limits<double>::min();

  for (int iter = 0; iter < 100; ++iter) {
    const double gamma = (1.0 + 2.0 * tol) * out.lower;
    const Matrix h = hamiltonian(sys, d, gamma);
    Eigen::EigenSolver<Matrix> es(h, false);
    if (es.info() != Eigen::Success) {
      throw Error(ErrorCode::SolverDiverged, "Hamiltonian eigenvalues failed");
    }
    const double axis_tol = 1e-8 * std::max(1.0, h.norm());
    std::vector<double> crossings;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
      const auto lambda = es.eigenvalues()(i);
      if (std::abs(lambda.real()) <= axis_tol) crossings.push_back(lambda.imag());
    }
    if (crossings.empty()) {
      out.upper = gamma;
      return out;
    }
    std::sort(crossings.begin(), crossings.end());
    double best = out.lower;
    double best_w = out.peak_frequency;
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
      const double w = std::abs(0.5 * (crossings[k] + crossings[k + 1]));
      const double g = frequency_gain(sys, w);
      if (g > best) {
        best = g;
        best_w = w;
      }
    }
    if (!(best > out.lower * (1.0 + 0.5 * tol))) {
      // Crossings without a higher gain between them are round-off echoes
      // of the current peak.
      out.upper = gamma;
      return out;
    }
    out.lower = best;
    out.peak_frequency = best_w;
  }
  throw Error(ErrorCode::MaxIterExceeded, "H-infinity level iteration did not settle");
}

double hinf_norm(const LtiSystem& sys, double tol) { return hinf_bounds(sys, tol).lower; }

double h2_norm(const LtiSystem& sys) {
  sys.validate();
  if (sys.D.size() > 0 && sys.D.norm() != 0.0) {
    throw Error(ErrorCode::NonzeroFeedthrough, "H2 norm is infinite with nonzero D");
  }
  require_hurwitz(sys.A, "A");
  if (sys.B.norm() == 0.0 || sys.C.norm() == 0.0) return 0.0;
  const Matrix x = solve_lyapunov(sys.A.transpose(), sys.B * sys.B.transpose());
  return std::sqrt(std::max(0.0, (sys.C * x * sys.C.transpose()).trace()));
}

HeteroLift hetero_lift(const HeteroModel& model, const DecompositionPlan& plan, const LqrSpec& spec) {
  model.validate();
  if (model.N() != spec.N || model.n() != spec.n || model.m() != spec.m || plan.N() != spec.N) {
    throw Error(ErrorCode::DimensionMismatch, "model, plan and spec sizes differ");
  }
  const Matrix ah = model.A();
  const Matrix bh = model.B();
  const Matrix q = spec.Q();
  const Matrix r = spec.R();
  if (!controllability_ok(ah, bh)) {
    throw Error(ErrorCode::PreconditionFailed, "(A^h, B^h) is not controllable");
  }
  if (!(min_eigenvalue(q) > 0.0)) {
    throw Error(ErrorCode::PreconditionFailed, "Q is not positive definite");
  }
  const Matrix tb = kron(plan.T, Matrix::Identity(spec.n, spec.n));
  const Matrix th = kron(plan.T, Matrix::Identity(spec.m, spec.m));

  HeteroLift lift;
  lift.A_bar = tb.transpose() * ah * tb;
  lift.B_hat = tb.transpose() * bh * th;
  lift.A_tilde = ah - lift.A_bar;
  lift.B_tilde = bh - lift.B_hat;
  const AreSolution are = solve_are(lift.A_bar, lift.B_hat, q, r);
  lift.P_hat = are.P;
  lift.K = are.K;
  lift.A_hat = lift.A_bar - lift.B_hat * lift.K;
  require_hurwitz(lift.A_hat, "A_hat");
  return lift;
}

LmiResult lmi_stability_check(const Matrix& a_tilde, const Matrix& b_tilde, const Matrix& p_hat,
                              const Matrix& q, const Matrix& r, const Matrix& b_hat) {
  const Index n = p_hat.rows();
  if (a_tilde.rows() != n || a_tilde.cols() != n || q.rows() != n || b_tilde.rows() != n ||
      b_hat.rows() != n || b_tilde.cols() != b_hat.cols() || r.rows() != b_hat.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "LMI inputs do not conform");
  }
  Eigen::LLT<Matrix> r_llt(symmetrize(r));
  const Matrix pbh = p_hat * b_hat;
  const Matrix pbt = p_hat * b_tilde;
  const Matrix m = p_hat * a_tilde + a_tilde.transpose() * p_hat -
                   pbt * r_llt.solve(pbh.transpose()) - pbh * r_llt.solve(pbt.transpose()) - q -
                   pbh * r_llt.solve(pbh.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  LmiResult out;
  out.max_eig = es.eigenvalues().maxCoeff();
  out.pass = out.max_eig < 0.0;
  return out;
}

SmallGainResult small_gain_check(const HeteroModel& model, const Matrix& k, const Matrix& a_hat,
                                 const Matrix& a_tilde, const Matrix& b_tilde) {
  const Matrix ah = model.A();
  const Matrix bh = model.B();
  require_hurwitz(ah, "A^h");
  require_hurwitz(a_hat, "A_hat");
  SmallGainResult out;
  const LtiSystem sigma{ah, bh, a_tilde - b_tilde * k, Matrix()};
  out.lhs = hinf_bounds(sigma).upper;
  const LtiSystem loop{a_hat, Matrix::Identity(a_hat.rows(), a_hat.rows()), -k, Matrix()};
  const double loop_gain = hinf_bounds(loop).upper;
  out.rhs = loop_gain > 0.0 ? 1.0 / loop_gain : std::numeric_limits<double>::infinity();
  out.pass = out.lhs < out.rhs;
  return out;
}

PerformanceBound performance_bound(const HeteroModel& model, const Matrix& k,
                                   const DecompositionPlan& plan, const LqrSpec& spec,
                                   const Vector& x0) {
  model.validate();
  const Index nx = spec.N * spec.n;
  if (x0.size() != nx || k.rows() != spec.N * spec.m || k.cols() != nx) {
    throw Error(ErrorCode::DimensionMismatch, "x0 or K has the wrong size");
  }
  const Matrix ah = model.A();
  const Matrix bh = model.B();
  const Matrix q = spec.Q();
  const Matrix r = spec.R();
  const Matrix tb = kron(plan.T, Matrix::Identity(spec.n, spec.n));
  const Matrix th = kron(plan.T, Matrix::Identity(spec.m, spec.m));
  const Matrix a_bar = tb.transpose() * ah * tb;
  const Matrix b_hat = tb.transpose() * bh * th;
  const Matrix a_hat = a_bar - b_hat * k;
  const Matrix e = (ah - a_bar) - (bh - b_hat) * k;

  // Performance output y = [Q^{1/2}; -R^{1/2} K] eta.
  Matrix cy(nx + k.rows(), nx);
  cy << sym_sqrt(q), -sym_sqrt(r) * k;
  const Matrix x0_col = x0;

  PerformanceBound out;
  out.epsilon = h2_norm({ah, bh, e, Matrix()});

  // G_ey (I - G_Sigma G_eu)^{-1}: eta' = A_hat eta + w + e_sig, with the
  // plant x' = A^h x + B^h u driven by u = -K eta and e_sig = E x.
  Matrix ac(2 * nx, 2 * nx);
  ac << a_hat, e, -bh * k, ah;
  Matrix bc = Matrix::Zero(2 * nx, nx);
  bc.topRows(nx).setIdentity();
  Matrix cc = Matrix::Zero(cy.rows(), 2 * nx);
  cc.leftCols(nx) = cy;
  const double g_loop = h2_norm({ac, bc, cc, Matrix()});
  const double g_du = h2_norm({a_hat, x0_col, -k, Matrix()});
  out.alpha = g_loop * g_du;
  out.j2_bar = h2_norm({a_hat, x0_col, cy, Matrix()});
  out.bound = out.j2_bar + out.alpha * out.epsilon;
  out.actual_j2 = std::sqrt(std::max(0.0, evaluate_cost(ah - bh * k, q + k.transpose() * r * k, x0)));
  out.holds = out.actual_j2 <= out.bound * (1.0 + 1e-6);
  return out;
}

RobustReport robust_report(const HeteroModel& model, const DecompositionPlan& plan,
                           const LqrSpec& spec, const Vector& x0,
                           const std::optional<Matrix>& learned) {
  RobustReport report;
  report.lift = hetero_lift(model, plan, spec);
  const HeteroLift& lift = report.lift;
  const Matrix ah = model.A();
  const Matrix bh = model.B();
  report.lmi = lmi_stability_check(lift.A_tilde, lift.B_tilde, lift.P_hat, spec.Q(), spec.R(),
                                   lift.B_hat);
  report.closed_loop_abscissa = spectral_abscissa(ah - bh * lift.K);
  try {
    report.small_gain = small_gain_check(model, lift.K, lift.A_hat, lift.A_tilde, lift.B_tilde);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotHurwitz) throw;
    report.small_gain_note = e.what();
  }
  try {
    report.performance = performance_bound(model, lift.K, plan, spec, x0);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotHurwitz) throw;
    report.performance_note = e.what();
  }
  if (learned) {
    if (learned->rows() != lift.K.rows() || learned->cols() != lift.K.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "learned gain has the wrong shape");
    }
    report.learned_gain_gap = (*learned - lift.K).norm() / lift.K.norm();
    report.learned_abscissa = spectral_abscissa(ah - bh * *learned);
  }
  return report;
}

nlohmann::json report_to_json(const RobustReport& report) {
  const HeteroLift& lift = report.lift;
  nlohmann::json j = {
      {"A_tilde", matrix_to_json(lift.A_tilde)},
      {"B_tilde", matrix_to_json(lift.B_tilde)},
      {"A_hat", matrix_to_json(lift.A_hat)},
      {"P_hat", matrix_to_json(lift.P_hat)},
      {"K", matrix_to_json(lift.K)},
      {"lmiMaxEig", report.lmi.max_eig},
      {"lmiPass", report.lmi.pass},
      {"closedLoopAbscissa", report.closed_loop_abscissa},
      {"closedLoopStable", report.closed_loop_abscissa < 0.0},
  };
  if (report.small_gain) {
    j["smallGainLhs"] = report.small_gain->lhs;
    j["smallGainRhs"] = report.small_gain->rhs;
    j["smallGainPass"] = report.small_gain->pass;
  } else {
    j["smallGainPass"] = nullptr;
    j["smallGainNote"] = report.small_gain_note;
  }
  if (report.performance) {
    const PerformanceBound& p = *report.performance;
    j["epsilon"] = p.epsilon;
    j["alpha"] = p.alpha;
    j["J2bar"] = p.j2_bar;
    j["bound"] = p.bound;
    j["actualJ2"] = p.actual_j2;
    j["boundHolds"] = p.holds;
  } else {
    j["boundHolds"] = nullptr;
    j["performanceNote"] = report.performance_note;
  }
  if (report.learned_gain_gap) {
    j["learnedGainGap"] = *report.learned_gain_gap;
    j["learnedAbscissa"] = *report.learned_abscissa;
    j["learnedStable"] = *report.learned_abscissa < 0.0;
  }
  return j;
}

}  // namespace hlqr
