#include "hlqr/rl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>

#include "hlqr/lqr.hpp"
#include "hlqr/matrix_io.hpp"

namespace hlqr {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

Index sym_count(Index n) { return n * (n + 1) / 2; }

// Fixed-step RK4 under u = -K x + e(t).
class Stepper {
 public:
  Stepper(const Plant& plant, const Matrix& gain, const Excitation* excitation, double dt)
      : plant_(plant), gain_(gain), excitation_(excitation), dt_(dt) {
    e_.setZero(plant.input_dim());
  }

  void input(double t, const Vector& x, Vector& u) {
    if (gain_.size() > 0) {
      u.noalias() = -gain_ * x;
    } else {
      u.setZero(plant_.input_dim());
    }
    if (excitation_) {
      excitation_->evaluate(t, e_);
      u += e_;
    }
  }

  void step(double t, Vector& x) {
    const double h = dt_;
    input(t, x, u_);
    plant_.derivative(x, u_, k1_);
    tmp_ = x + 0.5 * h * k1_;
    input(t + 0.5 * h, tmp_, u_);
    plant_.derivative(tmp_, u_, k2_);
    tmp_ = x + 0.5 * h * k2_;
    input(t + 0.5 * h, tmp_, u_);
    plant_.derivative(tmp_, u_, k3_);
    tmp_ = x + h * k3_;
    input(t + h, tmp_, u_);
    plant_.derivative(tmp_, u_, k4_);
    x += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
    const double norm = x.norm();
    if (!std::isfinite(norm) || norm > 1e12) {
      throw Error(ErrorCode::NonFinite, "state diverged at t = " + std::to_string(t + h));
    }
  }

 private:
  const Plant& plant_;
  const Matrix& gain_;
  const Excitation* excitation_;
  double dt_;
  Vector u_, e_, k1_, k2_, k3_, k4_, tmp_;
};

Index steps_per(double interval, double dt) {
  if (!(dt > 0.0) || !(interval >= dt)) {
    throw Error(ErrorCode::PreconditionFailed, "need dt > 0 and an interval of at least dt");
  }
  const double ratio = interval / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * rounded) {
    throw Error(ErrorCode::PreconditionFailed, "the integration step must divide the interval");
  }
  return static_cast<Index>(rounded);
}

// Upper triangle of x x^T row by row, and u x^T column-major.
void window_integrand(const Vector& x, const Vector& u, double* xx, double* ux) {
  const Index n = x.size();
  const Index m = u.size();
  Index at = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) xx[at++] = x(i) * x(j);
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) ux[j * m + i] = u(i) * x(j);
  }
}

Matrix unpack_sym(const double* v, Index n) {
  Matrix s(n, n);
  Index at = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) s(i, j) = s(j, i) = v[at++];
  }
  return s;
}

// Coefficients c with c . svec(P) = <S, P> for symmetric S.
Vector weighted_svec(const Matrix& s) {
  const Index n = s.rows();
  Vector v(sym_count(n));
  Index at = 0;
  for (Index i = 0; i < n; ++i) {
    v(at++) = s(i, i);
    for (Index j = i + 1; j < n; ++j) v(at++) = s(i, j) + s(j, i);
  }
  return v;
}

struct Regression {
  Matrix theta;
  Vector rhs;
};

Regression build_regression(const TrajectoryBatch& batch, const Matrix& q, const Matrix& r,
                            const Matrix& k) {
  const Index n = batch.state_dim;
  const Index m = batch.input_dim;
  const Index ns = sym_count(n);
  const Index windows = batch.windows();
  Regression reg;
  reg.theta.resize(windows, ns + m * n);
  for (Index l = 0; l < windows; ++l) {
    Index at = 0;
    for (Index i = 0; i < n; ++i) {
      const double ei = batch.end(i, l), si = batch.start(i, l);
      reg.theta(l, at++) = ei * ei - si * si;
      for (Index j = i + 1; j < n; ++j) {
        reg.theta(l, at++) = 2.0 * (ei * batch.end(j, l) - si * batch.start(j, l));
      }
    }
    const Matrix ixx = unpack_sym(batch.ixx.row(l).eval().data(), n);
    Matrix w(m, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < m; ++i) w(i, j) = batch.iux(l, j * m + i);
    }
    w.noalias() += k * ixx;
    const Matrix y = -2.0 * (r * w);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < m; ++i) reg.theta(l, ns + j * m + i) = y(i, j);
    }
  }
  const Matrix qk = q + k.transpose() * r * k;
  reg.rhs = -(batch.ixx * weighted_svec(qk));
  return reg;
}

struct RegressionSolve {
  Vector solution;
  Index rank = 0;
  double condition = 0.0;
};

RegressionSolve factor_regression(const Matrix& theta, const Vector* rhs, double rank_tol) {
  Eigen::ColPivHouseholderQR<Matrix> qr(theta);
  qr.setThreshold(rank_tol);
  RegressionSolve out;
  out.rank = qr.rank();
  const Index q = theta.cols();
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  const double smallest = q > 0 ? diag(q - 1) : 0.0;
  out.condition = smallest > 0.0 ? diag(0) / smallest : std::numeric_limits<double>::infinity();
  if (rhs) out.solution = qr.solve(*rhs);
  return out;
}

void check_deadline(const RlConfig& config) {
  if (config.deadline && Clock::now() > *config.deadline) {
    throw Error(ErrorCode::Timeout, "wall-clock budget exhausted");
  }
}

}  // namespace

void ExcitationConfig::validate() const {
  if (component_count < 1) {
    throw Error(ErrorCode::PreconditionFailed, "excitation needs at least one component");
  }
  if (!(min_frequency > 0.0) || !(max_frequency >= min_frequency) ||
      !std::isfinite(max_frequency)) {
    throw Error(ErrorCode::PreconditionFailed, "excitation frequency range must be positive");
  }
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
    throw Error(ErrorCode::PreconditionFailed, "excitation amplitude must be finite and >= 0");
  }
}

void ClusterProblem::validate() const {
  const Index nc = state_dim();
  const Index mc = input_dim();
  if (agents < 1 || n < 1 || m < 1) {
    throw Error(ErrorCode::PreconditionFailed, "cluster dimensions must be positive");
  }
  if (q_block.rows() != nc || q_block.cols() != nc || r_block.rows() != mc ||
      r_block.cols() != mc) {
    throw Error(ErrorCode::DimensionMismatch, "cluster weights do not match its dimensions");
  }
  if (initial_gain.rows() != mc || initial_gain.cols() != nc) {
    throw Error(ErrorCode::DimensionMismatch, "cluster initial gain must be mN_i x nN_i");
  }
  if (min_eigenvalue(q_block) < -1e-10 * std::max(1.0, q_block.norm())) {
    throw Error(ErrorCode::PreconditionFailed, "cluster Q block is not PSD");
  }
  if (min_eigenvalue(r_block) <= 0.0) {
    throw Error(ErrorCode::PreconditionFailed, "cluster R block is not PD");
  }
  if (!(sample_interval > 0.0)) {
    throw Error(ErrorCode::PreconditionFailed, "sample interval must be positive");
  }
  if (windows() < unknown_count()) {
    throw Error(ErrorCode::PreconditionFailed, "window count is below the unknown count");
  }
  excitation.validate();
}

Excitation::Excitation(const ExcitationConfig& config, Index channels)
    : amplitude_(config.amplitude) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> freq(config.min_frequency, config.max_frequency);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  frequencies_.resize(channels, config.component_count);
  phases_.resize(channels, config.component_count);
  for (Index c = 0; c < channels; ++c) {
    for (Index j = 0; j < config.component_count; ++j) {
      frequencies_(c, j) = freq(rng);
      phases_(c, j) = phase(rng);
    }
  }
}

void Excitation::evaluate(double t, Vector& out) const {
  out.resize(channels());
  for (Index c = 0; c < channels(); ++c) {
    double sum = 0.0;
    for (Index j = 0; j < frequencies_.cols(); ++j) {
      sum += std::sin(frequencies_(c, j) * t + phases_(c, j));
    }
    out(c) = amplitude_ * sum;
  }
}

Trajectory simulate(const Plant& plant, const Matrix& gain, const Excitation* excitation,
                    const Vector& x0, double dt, double horizon) {
  const Index n = plant.state_dim();
  const Index m = plant.input_dim();
  if (x0.size() != n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");
  if (gain.size() > 0 && (gain.rows() != m || gain.cols() != n)) {
    throw Error(ErrorCode::DimensionMismatch, "gain must be input_dim x state_dim");
  }
  if (excitation && excitation->channels() != m) {
    throw Error(ErrorCode::DimensionMismatch, "excitation channel count differs from input_dim");
  }
  if (!(dt > 0.0) || !(horizon >= dt)) {
    throw Error(ErrorCode::PreconditionFailed, "need dt > 0 and horizon >= dt");
  }
  const auto steps = static_cast<Index>(std::llround(horizon / dt));

  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  traj.states.resize(n, steps + 1);
  traj.inputs.resize(m, steps + 1);
  Stepper stepper(plant, gain, excitation, dt);
  Vector x = x0;
  Vector u;
  for (Index s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) * dt;
    traj.times.push_back(t);
    traj.states.col(s) = x;
    stepper.input(t, x, u);
    traj.inputs.col(s) = u;
    if (s < steps) stepper.step(t, x);
  }
  return traj;
}

std::size_t batch_memory_estimate(const ClusterProblem& cluster) {
  const auto nc = static_cast<double>(cluster.state_dim());
  const auto mc = static_cast<double>(cluster.input_dim());
  const auto q = static_cast<double>(cluster.unknown_count());
  const auto windows = static_cast<double>(cluster.windows());
  // Batch integrals and endpoints, then the regression matrix and its QR copy.
  const double doubles = windows * (nc * (nc + 1) / 2 + mc * nc + 2 * nc) + 2 * windows * q;
  const double bytes = 8.0 * doubles;
  if (bytes >= static_cast<double>(std::numeric_limits<std::size_t>::max())) {
    return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(bytes);
}

TrajectoryBatch collect_batch(const Plant& plant, const ClusterProblem& cluster, const Vector& x0,
                              const RlConfig& config) {
  cluster.validate();
  const Index n = cluster.state_dim();
  const Index m = cluster.input_dim();
  if (plant.state_dim() != n || plant.input_dim() != m) {
    throw Error(ErrorCode::DimensionMismatch, "plant does not match the cluster dimensions");
  }
  if (x0.size() != n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");
  const std::size_t need = batch_memory_estimate(cluster);
  if (need > config.memory_budget_bytes) {
    throw Error(ErrorCode::BudgetExceeded,
                "regression needs about " + std::to_string(need >> 20) + " MiB, budget is " +
                    std::to_string(config.memory_budget_bytes >> 20) + " MiB");
  }
  const Index per_window = steps_per(cluster.sample_interval, config.dt);
  const Index windows = cluster.windows();
  const Index ns = sym_count(n);

  TrajectoryBatch batch;
  batch.state_dim = n;
  batch.input_dim = m;
  batch.start.resize(n, windows);
  batch.end.resize(n, windows);
  batch.ixx.resize(windows, ns);
  batch.iux.resize(windows, m * n);
  batch.unknowns = cluster.unknown_count();

  const Excitation excitation(cluster.excitation, m);
  Stepper stepper(plant, cluster.initial_gain, &excitation, config.dt);
  Vector x = x0;
  Vector u;
  Vector f_xx(ns), f_ux(m * n);
  Vector acc_xx(ns), acc_ux(m * n);
  stepper.input(0.0, x, u);
  window_integrand(x, u, f_xx.data(), f_ux.data());

  double t = 0.0;
  Index step = 0;
  const double h = config.dt;
  for (Index l = 0; l < windows; ++l) {
    check_deadline(config);
    batch.start.col(l) = x;
    acc_xx = 0.5 * f_xx;
    acc_ux = 0.5 * f_ux;
    for (Index s = 1; s <= per_window; ++s) {
      stepper.step(t, x);
      ++step;
      t = static_cast<double>(step) * h;
      stepper.input(t, x, u);
      window_integrand(x, u, f_xx.data(), f_ux.data());
      const double w = s == per_window ? 0.5 : 1.0;
      acc_xx += w * f_xx;
      acc_ux += w * f_ux;
    }
    batch.end.col(l) = x;
    batch.ixx.row(l) = h * acc_xx.transpose();
    batch.iux.row(l) = h * acc_ux.transpose();
  }
  if (!batch.ixx.allFinite() || !batch.iux.allFinite()) {
    throw Error(ErrorCode::NonFinite, "window integrals are not finite");
  }

  check_deadline(config);
  const Regression reg = build_regression(batch, cluster.q_block, cluster.r_block,
                                          cluster.initial_gain);
  const RegressionSolve probe = factor_regression(reg.theta, nullptr, config.rank_tol);
  batch.rank = probe.rank;
  batch.condition = probe.condition;
  batch.rank_ok = probe.rank == batch.unknowns;
  if (!batch.rank_ok) {
    throw Error(ErrorCode::ExcitationDeficient,
                "regression rank " + std::to_string(probe.rank) + " < " +
                    std::to_string(batch.unknowns) +
                    " unknowns; raise the window count, amplitude or component count");
  }
  return batch;
}

PolicyIterationResult offpolicy_pi(const TrajectoryBatch& batch, const ClusterProblem& cluster,
                                   const RlConfig& config) {
  const Index n = cluster.state_dim();
  const Index m = cluster.input_dim();
  if (batch.state_dim != n || batch.input_dim != m) {
    throw Error(ErrorCode::DimensionMismatch, "batch does not match the cluster");
  }
  if (!batch.rank_ok) {
    throw Error(ErrorCode::ExcitationDeficient, "batch failed the excitation rank check");
  }
  const Index ns = sym_count(n);

  PolicyIterationResult out;
  Matrix k = cluster.initial_gain;
  out.k_history.push_back(k);
  for (int iter = 0; iter < config.max_iter; ++iter) {
    check_deadline(config);
    const Regression reg = build_regression(batch, cluster.q_block, cluster.r_block, k);
    const RegressionSolve sol = factor_regression(reg.theta, &reg.rhs, config.rank_tol);
    out.condition = std::max(out.condition, sol.condition);
    if (sol.rank < reg.theta.cols() || sol.condition > config.condition_limit) {
      throw Error(ErrorCode::RegressionSingular,
                  "iteration " + std::to_string(iter) + ": condition estimate " +
                      std::to_string(sol.condition));
    }
    if (!sol.solution.allFinite()) {
      throw Error(ErrorCode::NonFinite, "regression produced non-finite values");
    }
    const double rhs_norm = reg.rhs.norm();
    out.residual = (reg.theta * sol.solution - reg.rhs).norm() / (rhs_norm > 0.0 ? rhs_norm : 1.0);

    Matrix p = unpack_sym(sol.solution.data(), n);
    k = Eigen::Map<const Matrix>(sol.solution.data() + ns, m, n);
    out.p_history.push_back(p);
    out.k_history.push_back(k);
    // Scaled by ||P|| so that poorly scaled clusters are not held below the
    // round-off floor of the regression.
    const double step = iter >= 1 ? (p - out.p_history[iter - 1]).norm() : 0.0;
    if (iter >= 1 && step <= config.tol * std::max(1.0, p.norm())) {
      if (!(min_eigenvalue(p) > 0.0)) {
        throw Error(ErrorCode::NotStabilizing, "converged value matrix is not positive definite");
      }
      out.P = std::move(p);
      out.K = k;
      out.iterations = iter;
      return out;
    }
  }
  throw Error(ErrorCode::MaxIterExceeded, "policy iteration did not converge in " +
                                              std::to_string(config.max_iter) + " iterations");
}

double empirical_decay_rate(const Plant& plant, const Matrix& gain, const RlConfig& config) {
  const Index n = plant.state_dim();
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = normal(rng);

  const Index half = std::max<Index>(1, static_cast<Index>(
                                            std::llround(0.5 * config.decay_horizon / config.decay_dt)));
  Stepper stepper(plant, gain, nullptr, config.decay_dt);
  double mid_norm = 0.0;
  try {
    for (Index s = 0; s < 2 * half; ++s) {
      if (s == half) mid_norm = x.norm();
      stepper.step(static_cast<double>(s) * config.decay_dt, x);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFinite) return std::numeric_limits<double>::infinity();
    throw;
  }
  const double end_norm = x.norm();
  if (!(mid_norm > std::numeric_limits<double>::min())) {
    return -std::numeric_limits<double>::infinity();
  }
  if (end_norm == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(end_norm / mid_norm) / (static_cast<double>(half) * config.decay_dt);
}

ClusterFailure::ClusterFailure(const Error& cause, std::size_t cluster, HierarchicalResult partial)
    : Error(cause.code(), "cluster " + std::to_string(cluster) + ": " + cause.what()),
      cluster_(cluster),
      partial_(std::move(partial)) {}

int resolve_threads(int requested, std::size_t tasks) {
  int threads = requested > 0 ? requested
                              : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("HLQR_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) threads = std::min<long>(threads, cap);
  }
  threads = std::min<long>(threads, static_cast<long>(std::max<std::size_t>(tasks, 1)));
  return std::max(threads, 1);
}

HierarchicalResult hierarchical_solve(const LqrSpec& spec, const DecompositionPlan& plan,
                                      std::shared_ptr<const Plant> plant,
                                      const std::vector<Matrix>& initial_gains, const Vector& x0,
                                      const ExcitationConfig& excitation, double sample_interval,
                                      const RlConfig& config) {
  const auto started = Clock::now();
  spec.validate();
  if (!plant || plant->state_dim() != spec.N * spec.n || plant->input_dim() != spec.N * spec.m) {
    throw Error(ErrorCode::DimensionMismatch, "plant does not match the spec dimensions");
  }
  if (plan.N() != spec.N) throw Error(ErrorCode::DimensionMismatch, "plan size differs from N");
  if (initial_gains.size() != plan.r()) {
    throw Error(ErrorCode::DimensionMismatch, "need one initial gain per cluster");
  }
  if (x0.size() != spec.N * spec.n) throw Error(ErrorCode::DimensionMismatch, "x0 has the wrong size");

  std::vector<ClusterProblem> problems = project_problem(spec, plan);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    problems[i].initial_gain = initial_gains[i];
    problems[i].excitation = excitation;
    problems[i].excitation.seed = excitation.seed + i;
    problems[i].sample_interval = sample_interval;
  }
  const bool identity_map = plan.r() == 1 &&
                            plan.T.isApprox(Matrix::Identity(spec.N, spec.N), 0.0);

  HierarchicalResult result;
  result.clusters.resize(problems.size());
  std::vector<std::exception_ptr> errors(problems.size());

  auto run = [&](std::size_t i) {
    const auto t0 = Clock::now();
    const ClusterProblem& p = problems[i];
    ClusterStats& stats = result.clusters[i];
    stats.index = i;
    stats.size = p.agents;
    std::shared_ptr<const Plant> view = plant;
    Vector xi0 = x0;
    if (!identity_map) {
      const Matrix rows = plan.cluster_rows(i);
      Matrix state_map = kron(rows, Matrix::Identity(spec.n, spec.n));
      Matrix input_map = kron(rows, Matrix::Identity(spec.m, spec.m));
      xi0 = state_map * x0;
      view = std::make_shared<ProjectedPlant>(plant, std::move(state_map), std::move(input_map));
    }
    const TrajectoryBatch batch = collect_batch(*view, p, xi0, config);
    PolicyIterationResult pi = offpolicy_pi(batch, p, config);
    stats.decay_rate = empirical_decay_rate(*view, pi.K, config);
    if (!(stats.decay_rate < 0.0)) {
      throw Error(ErrorCode::NotStabilizing,
                  "learned gain does not decay the cluster state (rate " +
                      std::to_string(stats.decay_rate) + ")");
    }
    stats.iterations = pi.iterations;
    stats.residual = pi.residual;
    stats.condition = pi.condition;
    stats.K = std::move(pi.K);
    stats.P = std::move(pi.P);
    stats.wall_ms = elapsed_ms(t0);
    stats.done = true;
  };

  const int threads = resolve_threads(config.threads, problems.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < problems.size(); i = next++) {
      try {
        run(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    result.total_wall_ms = elapsed_ms(started);
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw ClusterFailure(e, i, std::move(result));
    }
  }

  std::vector<Matrix> gains;
  for (const auto& c : result.clusters) gains.push_back(c.K);
  result.K = assemble_gain(plan, gains, spec.n, spec.m);
  result.total_wall_ms = elapsed_ms(started);
  return result;
}

nlohmann::json learned_to_json(const HierarchicalResult& result) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : result.clusters) {
    clusters.push_back({{"size", c.size},
                        {"iters", c.iterations},
                        {"residual", c.residual},
                        {"condition", c.condition},
                        {"wallMs", c.wall_ms}});
  }
  return {{"K", matrix_to_json(result.K)},
          {"perCluster", std::move(clusters)},
          {"totalWallMs", result.total_wall_ms}};
}

}  // namespace hlqr
