#include "hlqr/matkit.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace hlqr {

namespace {

void require_square(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(name) + " must be square, got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

class UnionFind {
 public:
  explicit UnionFind(Index n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }

  Index find(Index i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller root wins so the representative is the smallest member.
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<Index> parent_;
};

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double spectral_abscissa(const Matrix& a) {
  require_square(a, "A");
  if (a.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverDiverged, "eigenvalue computation failed");
  }
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Matrix& a) { return spectral_abscissa(a) < 0.0; }

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(symmetric),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Matrix block_diag(const std::vector<Matrix>& blocks) {
  Index rows = 0, cols = 0;
  for (const auto& blk : blocks) {
    rows += blk.rows();
    cols += blk.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Index r = 0, c = 0;
  for (const auto& blk : blocks) {
    out.block(r, c, blk.rows(), blk.cols()) = blk;
    r += blk.rows();
    c += blk.cols();
  }
  return out;
}

SymEig sym_eig(const Matrix& m, double tol) {
  require_square(m, "M");
  if (!m.allFinite()) throw Error(ErrorCode::NonFinite, "matrix has non-finite entries");
  const double asym = (m - m.transpose()).norm();
  if (asym > tol * m.norm()) {
    throw Error(ErrorCode::NotSymmetric,
                "||M - M^T||_F = " + std::to_string(asym));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverDiverged, "symmetric eigensolver failed");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

Partition support_partition(const Matrix& m, double tol) {
  require_square(m, "M");
  const Index n = m.rows();
  UnionFind uf(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (std::abs(m(i, j)) + std::abs(m(j, i)) > tol) uf.unite(i, j);
    }
  }
  Partition p;
  std::vector<Index> slot(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const Index root = uf.find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<Index>(p.groups.size());
      p.groups.emplace_back();
    }
    p.groups[slot[root]].push_back(i);
  }
  return p;
}

Matrix sym_sqrt(const Matrix& m, double clip_tol) {
  const SymEig eig = sym_eig(m);
  const double scale = eig.values.cwiseAbs().maxCoeff();
  Vector roots(eig.values.size());
  for (Index i = 0; i < roots.size(); ++i) {
    const double lambda = eig.values(i);
    if (lambda <= clip_tol * scale) {
      if (lambda < -clip_tol * scale) {
        throw Error(ErrorCode::PreconditionFailed,
                    "matrix square root of an indefinite matrix (eigenvalue " +
                        std::to_string(lambda) + ")");
      }
      roots(i) = 0.0;
    } else {
      roots(i) = std::sqrt(lambda);
    }
  }
  return symmetrize(eig.vectors * roots.asDiagonal() * eig.vectors.transpose());
}

Index numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

Index krylov_rank(const Matrix& a, const Matrix& b, double rel_tol) {
  require_square(a, "A");
  if (b.rows() != a.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "A and B row counts differ");
  }
  const Index n = a.rows();
  if (n == 0 || b.cols() == 0) return 0;

  Matrix basis(n, 0);
  Matrix block = b;
  double scale = 0.0;
  {
    Eigen::BDCSVD<Matrix> svd(b);
    scale = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  }
  if (scale == 0.0) return 0;
  const double a_scale = a.norm();

  while (basis.cols() < n) {
    for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) {
      block -= basis * (basis.transpose() * block);
    }
    Eigen::BDCSVD<Matrix> svd(block, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    Index keep = 0;
    while (keep < s.size() && s(keep) > rel_tol * scale) ++keep;
    keep = std::min(keep, n - basis.cols());
    if (keep == 0) break;

    const Matrix fresh = svd.matrixU().leftCols(keep);
    Matrix grown(n, basis.cols() + keep);
    grown << basis, fresh;
    basis = std::move(grown);
    block = a * fresh;
    scale = a_scale;
    if (scale == 0.0) break;
  }
  return basis.cols();
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& w) {
  require_square(a, "A");
  require_square(w, "W");
  if (a.rows() != w.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "A and W sizes differ");
  }
  const Index n = a.rows();
  if (n == 0) return Matrix(0, 0);

  using CMatrix = Eigen::MatrixXcd;
  using CVector = Eigen::VectorXcd;

  // a = U S U^*, S upper triangular. With Y = U^* X U and C = U^* w U the
  // equation becomes S^* Y + Y S = -C, solved one column at a time.
  Eigen::ComplexSchur<CMatrix> schur(a.cast<std::complex<double>>());
  if (schur.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverDiverged, "Schur decomposition failed");
  }
  const CMatrix& s = schur.matrixT();
  const CMatrix& u = schur.matrixU();
  const double abscissa = s.diagonal().real().maxCoeff();
  if (!(abscissa < 0.0)) {
    throw Error(ErrorCode::NotHurwitz,
                "spectral abscissa " + std::to_string(abscissa) + " >= 0");
  }

  const CMatrix c = u.adjoint() * w.cast<std::complex<double>>() * u;
  CMatrix lower = s.adjoint();
  const CVector diag = lower.diagonal();
  CMatrix y(n, n);
  for (Index j = 0; j < n; ++j) {
    CVector rhs = -c.col(j);
    if (j > 0) rhs.noalias() -= y.leftCols(j) * s.col(j).head(j);
    lower.diagonal() = diag.array() + s(j, j);
    y.col(j) = lower.triangularView<Eigen::Lower>().solve(rhs);
  }
  Matrix x = (u * y * u.adjoint()).real();
  if ((w - w.transpose()).norm() <= 1e-12 * w.norm()) x = symmetrize(x);
  return x;
}

Matrix stabilizing_gain(const Matrix& a, const Matrix& b, double shift) {
  require_square(a, "A");
  if (b.rows() != a.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "A and B row counts differ");
  }
  const Index n = a.rows();
  // a + beta I must have its whole spectrum in the open right half plane.
  double min_real = 0.0;
  if (n > 0) {
    Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) {
      throw Error(ErrorCode::SolverDiverged, "eigenvalue computation failed");
    }
    min_real = es.eigenvalues().real().minCoeff();
  }
  const double beta = std::max(0.0, -min_real) + shift;
  const Matrix shifted = -(a + beta * Matrix::Identity(n, n)).transpose();
  const Matrix z = solve_lyapunov(shifted, 2.0 * b * b.transpose());
  Eigen::LLT<Matrix> llt(symmetrize(z));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::PreconditionFailed,
                "(A, B) is not controllable; shifted gramian is singular");
  }
  return llt.solve(b).transpose();
}

KleinmanResult kleinman_iterate(const Matrix& a, const Matrix& b,
                                const Matrix& q, const Matrix& r,
                                const Matrix& k0, double tol, int max_iter,
                                bool relative) {
  require_square(a, "A");
  const Index n = a.rows();
  const Index m = b.cols();
  if (b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != m ||
      r.cols() != m || k0.rows() != m || k0.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "Kleinman iteration inputs do not conform");
  }
  if (!(spectral_abscissa(a - b * k0) < 0.0)) {
    throw Error(ErrorCode::K0NotStabilizing, "initial gain does not stabilize (A, B)");
  }
  Eigen::LLT<Matrix> r_llt(symmetrize(r));
  if (r_llt.info() != Eigen::Success) {
    throw Error(ErrorCode::PreconditionFailed, "R is not positive definite");
  }

  KleinmanResult out;
  Matrix k = k0;
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix p;
    try {
      p = solve_lyapunov(a - b * k, q + k.transpose() * r * k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotHurwitz) throw;
      throw Error(ErrorCode::SolverDiverged,
                  "iterate " + std::to_string(iter) + " lost stability");
    }
    if (!p.allFinite()) throw Error(ErrorCode::SolverDiverged, "non-finite iterate");
    k = r_llt.solve(b.transpose() * p);
    out.iterates.push_back(p);
    if (iter >= 1) {
      const double step = (p - out.iterates[iter - 1]).norm();
      const double limit = relative ? tol * std::max(1.0, p.norm()) : tol;
      if (step <= limit) {
        out.P = std::move(p);
        out.K = std::move(k);
        out.iterations = iter;
        return out;
      }
    }
  }
  throw Error(ErrorCode::MaxIterExceeded,
              "Kleinman iteration did not converge in " + std::to_string(max_iter) +
                  " iterations");
}

double are_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                    const Matrix& r, const Matrix& p) {
  const Matrix bt_p = b.transpose() * p;
  return (a.transpose() * p + p * a + q - bt_p.transpose() * r.llt().solve(bt_p)).norm();
}

Matrix solve_are_sign(const Matrix& a, const Matrix& b, const Matrix& q,
                      const Matrix& r, int max_iter) {
  const Index n = a.rows();
  Matrix h(2 * n, 2 * n);
  h << a, -b * r.llt().solve(b.transpose()), -q, -a.transpose();

  // Byers' determinant-scaled Newton iteration for sign(h).
  Matrix z = h;
  const double dim = static_cast<double>(2 * n);
  bool converged = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::PartialPivLU<Matrix> lu(z);
    const double log_det = lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
    const double c = std::exp(-log_det / dim);
    const Matrix next = 0.5 * (c * z + lu.inverse() / c);
    if (!next.allFinite()) break;
    const double change = (next - z).norm();
    z = next;
    if (change <= 1e-13 * z.norm()) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::SolverDiverged, "matrix sign iteration stalled");

  const Matrix identity = Matrix::Identity(n, n);
  Matrix lhs(2 * n, n), rhs(2 * n, n);
  lhs << z.topRightCorner(n, n), z.bottomRightCorner(n, n) + identity;
  rhs << z.topLeftCorner(n, n) + identity, z.bottomLeftCorner(n, n);
  return symmetrize(lhs.colPivHouseholderQr().solve(-rhs));
}

AreSolution solve_are(const Matrix& a, const Matrix& b, const Matrix& q,
                      const Matrix& r, const AreOptions& options) {
  require_square(a, "A");
  const Index n = a.rows();
  const Index m = b.cols();
  if (b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != m || r.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "Riccati inputs do not conform");
  }
  if (!a.allFinite() || !b.allFinite() || !q.allFinite() || !r.allFinite()) {
    throw Error(ErrorCode::NonFinite, "Riccati inputs contain non-finite entries");
  }
  if (min_eigenvalue(r) <= 0.0) {
    throw Error(ErrorCode::PreconditionFailed, "R is not positive definite");
  }
  if (options.check_preconditions) {
    if (krylov_rank(a, b, options.rank_tol) != n) {
      throw Error(ErrorCode::PreconditionFailed, "(A, B) is not controllable");
    }
    const Matrix q_root = sym_sqrt(q);
    if (krylov_rank(a.transpose(), q_root.transpose(), options.rank_tol) != n) {
      throw Error(ErrorCode::PreconditionFailed, "(Q^{1/2}, A) is not observable");
    }
  }

  const double a_scale = std::max(1.0, a.norm());
  auto accept = [&](const Matrix& p) {
    if (!p.allFinite()) return false;
    const double res = are_residual(a, b, q, r, p);
    return res <= options.residual_tol * p.norm() * a_scale * a_scale;
  };
  auto finish = [&](Matrix p, int iterations, AreMethod method) {
    AreSolution s;
    s.K = r.llt().solve(b.transpose() * p);
    s.P = std::move(p);
    s.iterations = iterations;
    s.method = method;
    if (!(spectral_abscissa(a - b * s.K) < 0.0)) {
      throw Error(ErrorCode::SolverDiverged, "Riccati solution is not stabilizing");
    }
    return s;
  };

  try {
    const Matrix k0 = stabilizing_gain(a, b);
    KleinmanResult kr = kleinman_iterate(a, b, q, r, k0, 1e-10, options.max_iter,
                                         /*relative=*/true);
    if (accept(kr.P)) return finish(std::move(kr.P), kr.iterations, AreMethod::Kleinman);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MaxIterExceeded && e.code() != ErrorCode::SolverDiverged &&
        e.code() != ErrorCode::PreconditionFailed && e.code() != ErrorCode::K0NotStabilizing) {
      throw;
    }
  }

  Matrix p = solve_are_sign(a, b, q, r);
  if (!accept(p)) {
    throw Error(ErrorCode::SolverDiverged, "Riccati residual bound not met");
  }
  return finish(std::move(p), 0, AreMethod::SignFunction);
}

}  // namespace hlqr
