#include "koopkan/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "koopkan/errors.hpp"

namespace koopkan {

bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

Matrix pinv(const Eigen::Ref<const Matrix>& m, double tol) {
  if (!(tol >= 0.0)) throw InvalidInput("pinv: tolerance must be non-negative");
  if (!all_finite(m)) throw InvalidInput("pinv: matrix has non-finite entries");
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());

  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = tol * (sv.size() > 0 ? sv(0) : 0.0);

  Vector inv_sv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

Matrix lstsq(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b,
             double tol) {
  if (a.rows() != b.rows()) {
    throw InvalidInput("lstsq: row mismatch (" + std::to_string(a.rows()) + " vs " +
                       std::to_string(b.rows()) + ")");
  }
  if (!all_finite(b)) throw InvalidInput("lstsq: right-hand side has non-finite entries");
  return pinv(a, tol) * b;
}

Matrix riccati_map(const Matrix& a, const Matrix& b, const Matrix& q,
                   const Matrix& r, const Matrix& p) {
  const Matrix pa = p * a;
  const Matrix bt_pa = b.transpose() * pa;
  const Matrix s = r + b.transpose() * p * b;
  const Matrix gain = s.ldlt().solve(bt_pa);
  return a.transpose() * pa - bt_pa.transpose() * gain + q;
}

Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q,
                  const Matrix& r, const DareOptions& opts) {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw InvalidInput("solve_dare: inconsistent dimensions");
  }
  if (!all_finite(a) || !all_finite(b) || !all_finite(q) || !all_finite(r)) {
    throw InvalidInput("solve_dare: non-finite input");
  }
  if (r.size() > 0) {
    Eigen::LLT<Matrix> llt(0.5 * (r + r.transpose()));
    if (llt.info() != Eigen::Success) {
      throw InvalidInput("solve_dare: R is not positive definite");
    }
  }

  if (n == 0) return Matrix(0, 0);

  Matrix p = 0.5 * (q + q.transpose());
  for (int it = 0; it < opts.max_iter; ++it) {
    Matrix next = riccati_map(a, b, q, r, p);
    next = 0.5 * (next + next.transpose());
    if (!all_finite(next)) break;
    const double step = (next - p).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    p = std::move(next);
    if (step <= opts.tol * scale) return p;
  }
  throw ConvergenceError("solve_dare: no convergence within " +
                         std::to_string(opts.max_iter) + " iterations");
}

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("spectral_radius: matrix not square");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace koopkan
