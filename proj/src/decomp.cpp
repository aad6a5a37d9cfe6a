#include "hlqr/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hlqr/matrix_io.hpp"

namespace hlqr {

namespace {

void require_square_same(const Matrix& g1, const Matrix& g2) {
  if (g1.rows() != g1.cols() || g2.rows() != g2.cols() || g1.rows() != g2.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "G1 and G2 must be square of equal size");
  }
}

// Each column scaled so its largest-magnitude entry is positive.
void normalize_signs(Matrix& vectors) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index at = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&at);
    if (vectors(at, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

bool has_distinct_eigenvalues(const Vector& ascending, double min_gap) {
  for (Index i = 1; i < ascending.size(); ++i) {
    if (!(ascending(i) - ascending(i - 1) > min_gap)) return false;
  }
  return true;
}

void fill_blocks(DecompositionPlan& plan, const Matrix& g1, const Matrix& g2) {
  const Matrix phi = symmetrize(plan.T * g1 * plan.T.transpose());
  const Matrix psi = symmetrize(plan.T * g2 * plan.T.transpose());
  plan.phi.clear();
  plan.psi.clear();
  Index at = 0;
  for (Index size : plan.cluster_sizes) {
    plan.phi.push_back(phi.block(at, at, size, size));
    plan.psi.push_back(psi.block(at, at, size, size));
    at += size;
  }
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

// Complete decomposition of commuting symmetric matrices: eigenvectors of g1,
// with each repeated eigenspace rotated to diagonalize g2.
DecompositionPlan common_eigenbasis(const Matrix& g1, const Matrix& g2, double tol) {
  const Index n = g1.rows();
  const SymEig e1 = sym_eig(g1);
  const double gap = tol * g1.norm();
  Matrix basis = e1.vectors;
  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && e1.values(end) - e1.values(end - 1) <= gap) ++end;
    if (end - start > 1) {
      const Matrix span = basis.middleCols(start, end - start);
      const SymEig inner = sym_eig(symmetrize(span.transpose() * g2 * span), 1e-6);
      basis.middleCols(start, end - start) = span * inner.vectors;
    }
    start = end;
  }
  normalize_signs(basis);

  DecompositionPlan plan;
  plan.T = basis.transpose();
  plan.cluster_sizes.assign(static_cast<std::size_t>(n), 1);
  plan.decomposable = n > 1;
  plan.method = PlanMethod::CommonEigenbasis;
  fill_blocks(plan, g1, g2);
  return plan;
}

}  // namespace

const char* to_string(PlanMethod method) {
  switch (method) {
    case PlanMethod::Pairing: return "pairing";
    case PlanMethod::CommonEigenbasis: return "common-eigenbasis";
    case PlanMethod::Trivial: return "trivial";
  }
  return "unknown";
}

void LqrSpec::validate() const {
  if (N < 1 || n < 1 || m < 1) {
    throw Error(ErrorCode::PreconditionFailed, "N, n and m must be positive");
  }
  if (G1.rows() != N || G1.cols() != N || G2.rows() != N || G2.cols() != N ||
      Q0.rows() != n || Q0.cols() != n || R0.rows() != m || R0.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "weight matrix sizes do not match N, n, m");
  }
  auto symmetric = [](const Matrix& x) {
    return (x - x.transpose()).norm() <= 1e-10 * std::max(1.0, x.norm());
  };
  if (!symmetric(G1) || !symmetric(G2) || !symmetric(Q0) || !symmetric(R0)) {
    throw Error(ErrorCode::PreconditionFailed, "weights must be symmetric");
  }
  if (min_eigenvalue(G1) < -1e-10) {
    throw Error(ErrorCode::PreconditionFailed, "G1 must be positive semidefinite");
  }
  if (min_eigenvalue(G2) <= 0.0 || min_eigenvalue(Q0) <= 0.0 || min_eigenvalue(R0) <= 0.0) {
    throw Error(ErrorCode::PreconditionFailed, "G2, Q0 and R0 must be positive definite");
  }
}

Index DecompositionPlan::offset(std::size_t cluster) const {
  Index at = 0;
  for (std::size_t i = 0; i < cluster; ++i) at += cluster_sizes.at(i);
  return at;
}

Matrix DecompositionPlan::cluster_rows(std::size_t cluster) const {
  return T.middleRows(offset(cluster), cluster_sizes.at(cluster));
}

bool check_commute(const Matrix& g1, const Matrix& g2, double tol) {
  require_square_same(g1, g2);
  const double gap = (g1 * g2 - g2 * g1).norm();
  return gap <= tol * g1.norm() * g2.norm();
}

bool invariant_subspace_check(const Matrix& g, const Matrix& gamma, double tol) {
  if (g.rows() != g.cols() || gamma.rows() != g.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "G and Gamma do not conform");
  }
  const Index s = gamma.cols();
  if (s < 1 || s >= g.rows()) {
    throw Error(ErrorCode::NotOrthonormal, "Gamma must have between 1 and N-1 columns");
  }
  if ((gamma.transpose() * gamma - Matrix::Identity(s, s)).norm() > tol) {
    throw Error(ErrorCode::NotOrthonormal, "Gamma^T Gamma != I");
  }
  const Matrix image = g * gamma;
  const double leak = (image - gamma * (gamma.transpose() * image)).norm();
  return leak <= tol * g.norm();
}

DecompositionPlan trivial_plan(const Matrix& g1, const Matrix& g2) {
  require_square_same(g1, g2);
  DecompositionPlan plan;
  plan.T = Matrix::Identity(g1.rows(), g1.rows());
  plan.cluster_sizes = {g1.rows()};
  plan.phi = {symmetrize(g1)};
  plan.psi = {symmetrize(g2)};
  plan.decomposable = false;
  plan.method = PlanMethod::Trivial;
  return plan;
}

DecompositionPlan construct_T(const Matrix& g1, const Matrix& g2, double tol) {
  require_square_same(g1, g2);
  const Index n = g1.rows();
  if (n == 0) throw Error(ErrorCode::PreconditionFailed, "empty weighting graphs");
  if (min_eigenvalue(g1) < -1e-10) {
    throw Error(ErrorCode::PreconditionFailed, "G1 must be positive semidefinite");
  }
  if (min_eigenvalue(g2) <= 0.0) {
    throw Error(ErrorCode::PreconditionFailed, "G2 must be positive definite");
  }

  SymEig e1 = sym_eig(g1);
  SymEig e2 = sym_eig(g2);
  const bool distinct = has_distinct_eigenvalues(e1.values, tol * g1.norm()) &&
                        has_distinct_eigenvalues(e2.values, tol * g2.norm());
  if (!distinct) {
    if (check_commute(g1, g2, tol)) return common_eigenbasis(g1, g2, tol);
    throw Error(ErrorCode::NotSupported,
                "repeated eigenvalues with non-commuting G1, G2 are not supported");
  }
  if (n == 1) return trivial_plan(g1, g2);

  normalize_signs(e1.vectors);
  normalize_signs(e2.vectors);
  const Matrix& f1 = e1.vectors;  // column i is p_i
  const Matrix& f2 = e2.vectors;  // column j is q_j

  // Pairing: node i is p_i, node n + j is q_j.
  const double threshold = 1e-8 * static_cast<double>(n);
  const Matrix products = f1.transpose() * f2;
  const auto un = static_cast<std::size_t>(n);
  DisjointSets sets(2 * un);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (std::abs(products(i, j)) > threshold) {
        sets.unite(static_cast<std::size_t>(i), un + static_cast<std::size_t>(j));
      }
    }
  }
  std::size_t pairing_products = un * un;

  struct Group {
    std::vector<Index> p, q;
  };
  std::vector<Group> groups;
  std::vector<long> slot(2 * un, -1);
  for (std::size_t node = 0; node < 2 * un; ++node) {
    const std::size_t root = sets.find(node);
    if (slot[root] < 0) {
      slot[root] = static_cast<long>(groups.size());
      groups.emplace_back();
    }
    Group& g = groups[static_cast<std::size_t>(slot[root])];
    if (node < un) {
      g.p.push_back(static_cast<Index>(node));
    } else {
      g.q.push_back(static_cast<Index>(node - un));
    }
  }

  // Balanced groups stay; any unbalanced ones (numerically ambiguous links)
  // are merged into a single group, which is balanced since both sides
  // total N.
  std::vector<Group> clusters;
  Group merged;
  for (auto& g : groups) {
    if (g.p.size() == g.q.size()) {
      clusters.push_back(std::move(g));
    } else {
      merged.p.insert(merged.p.end(), g.p.begin(), g.p.end());
      merged.q.insert(merged.q.end(), g.q.begin(), g.q.end());
    }
  }
  if (!merged.p.empty()) {
    std::sort(merged.p.begin(), merged.p.end());
    std::sort(merged.q.begin(), merged.q.end());
    clusters.push_back(std::move(merged));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Group& a, const Group& b) { return a.p.front() < b.p.front(); });

  if (clusters.size() <= 1) {
    DecompositionPlan plan = trivial_plan(g1, g2);
    plan.pairing_products = pairing_products;
    return plan;
  }

  // E_l = P_l F_l with the eigenvectors as rows, grouped by cluster.
  Matrix e1_rows(n, n), e2_rows(n, n);
  DecompositionPlan plan;
  Index row = 0;
  for (const auto& g : clusters) {
    for (std::size_t k = 0; k < g.p.size(); ++k, ++row) {
      e1_rows.row(row) = f1.col(g.p[k]).transpose();
      e2_rows.row(row) = f2.col(g.q[k]).transpose();
    }
    plan.cluster_sizes.push_back(static_cast<Index>(g.p.size()));
  }
  const Matrix u = e1_rows * e2_rows.transpose();
  plan.T = u * e1_rows;
  plan.decomposable = true;
  plan.method = PlanMethod::Pairing;
  plan.pairing_products = pairing_products;
  fill_blocks(plan, g1, g2);
  return plan;
}

PlanReport verify_plan(const DecompositionPlan& plan, const Matrix& g1, const Matrix& g2,
                       double tol, double orth_tol) {
  require_square_same(g1, g2);
  const Index n = g1.rows();
  if (plan.T.rows() != n || plan.T.cols() != n || plan.phi.size() != plan.r() ||
      plan.psi.size() != plan.r()) {
    throw Error(ErrorCode::DimensionMismatch, "plan does not conform to G1, G2");
  }
  Index total = 0;
  for (Index s : plan.cluster_sizes) total += s;
  if (total != n) throw Error(ErrorCode::DimensionMismatch, "cluster sizes do not sum to N");

  PlanReport report;
  report.orthogonality = (plan.T * plan.T.transpose() - Matrix::Identity(n, n)).norm();
  const Matrix t1 = plan.T * g1 * plan.T.transpose();
  const Matrix t2 = plan.T * g2 * plan.T.transpose();
  Matrix mask = Matrix::Ones(n, n);
  Index at = 0;
  for (std::size_t i = 0; i < plan.r(); ++i) {
    const Index s = plan.cluster_sizes[i];
    mask.block(at, at, s, s).setZero();
    report.block_mismatch = std::max(
        {report.block_mismatch, (plan.phi[i] - t1.block(at, at, s, s)).norm() / std::max(1.0, g1.norm()),
         (plan.psi[i] - t2.block(at, at, s, s)).norm() / std::max(1.0, g2.norm())});
    at += s;
  }
  report.off_block_g1 = t1.cwiseProduct(mask).norm();
  report.off_block_g2 = t2.cwiseProduct(mask).norm();
  report.pass = report.orthogonality <= orth_tol &&
                report.off_block_g1 <= tol * g1.norm() &&
                report.off_block_g2 <= tol * g2.norm() && report.block_mismatch <= tol;
  return report;
}

std::vector<ClusterProblem> project_problem(const LqrSpec& spec, const DecompositionPlan& plan) {
  if (plan.N() != spec.N) throw Error(ErrorCode::DimensionMismatch, "plan size differs from N");
  std::vector<ClusterProblem> problems;
  Index at = 0;
  for (std::size_t i = 0; i < plan.r(); ++i) {
    ClusterProblem p;
    p.index = i;
    p.agents = plan.cluster_sizes[i];
    p.offset = at;
    p.n = spec.n;
    p.m = spec.m;
    p.q_block = kron(plan.phi[i], spec.Q0);
    p.r_block = kron(plan.psi[i], spec.R0);
    p.excitation.seed = 1 + i;
    problems.push_back(std::move(p));
    at += plan.cluster_sizes[i];
  }
  return problems;
}

nlohmann::json plan_to_json(const DecompositionPlan& plan) {
  nlohmann::json phi = nlohmann::json::array(), psi = nlohmann::json::array();
  for (const auto& b : plan.phi) phi.push_back(matrix_to_json(b));
  for (const auto& b : plan.psi) psi.push_back(matrix_to_json(b));
  return {{"T", matrix_to_json(plan.T)},
          {"clusterSizes", plan.cluster_sizes},
          {"phi", std::move(phi)},
          {"psi", std::move(psi)},
          {"r", plan.r()},
          {"decomposable", plan.decomposable},
          {"method", to_string(plan.method)}};
}

DecompositionPlan plan_from_json(const nlohmann::json& j) {
  DecompositionPlan plan;
  try {
    plan.T = matrix_from_json(j.at("T"));
    plan.cluster_sizes = j.at("clusterSizes").get<std::vector<Index>>();
    for (const auto& b : j.at("phi")) plan.phi.push_back(matrix_from_json(b));
    for (const auto& b : j.at("psi")) plan.psi.push_back(matrix_from_json(b));
    plan.decomposable = j.at("decomposable").get<bool>();
    const std::string method = j.value("method", std::string("pairing"));
    plan.method = method == "trivial"             ? PlanMethod::Trivial
                  : method == "common-eigenbasis" ? PlanMethod::CommonEigenbasis
                                                  : PlanMethod::Pairing;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("plan JSON: ") + e.what());
  }
  if (j.contains("r") && j.at("r").get<std::size_t>() != plan.r()) {
    throw Error(ErrorCode::ParseError, "plan JSON: r does not match clusterSizes");
  }
  if (plan.phi.size() != plan.r() || plan.psi.size() != plan.r()) {
    throw Error(ErrorCode::ParseError, "plan JSON: block count does not match clusterSizes");
  }
  return plan;
}

nlohmann::json spec_to_json(const LqrSpec& spec) {
  return {{"N", spec.N},
          {"n", spec.n},
          {"m", spec.m},
          {"G1", matrix_to_json(spec.G1)},
          {"G2", matrix_to_json(spec.G2)},
          {"Q0", matrix_to_json(spec.Q0)},
          {"R0", matrix_to_json(spec.R0)}};
}

LqrSpec spec_from_json(const nlohmann::json& j) {
  LqrSpec spec;
  try {
    spec.G1 = matrix_from_json(j.at("G1"));
    spec.G2 = matrix_from_json(j.at("G2"));
    spec.Q0 = matrix_from_json(j.at("Q0"));
    spec.R0 = matrix_from_json(j.at("R0"));
    spec.N = j.value("N", spec.G1.rows());
    spec.n = j.value("n", spec.Q0.rows());
    spec.m = j.value("m", spec.R0.rows());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("spec JSON: ") + e.what());
  }
  return spec;
}

}  // namespace hlqr
