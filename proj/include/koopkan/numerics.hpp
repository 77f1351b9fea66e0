#pragma once

#include <Eigen/Dense>

namespace koopkan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultPinvTol = 1e-12;

/// True when every entry is finite.
bool all_finite(const Eigen::Ref<const Matrix>& m);

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// `tol * sigma_max` are treated as zero. Throws InvalidInput on NaN/Inf.
Matrix pinv(const Eigen::Ref<const Matrix>& m, double tol = kDefaultPinvTol);

/// Minimum-norm X minimizing ||a X - b||_F.
Matrix lstsq(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b,
             double tol = kDefaultPinvTol);

struct DareOptions {
  int max_iter = 10000;
  double tol = 1e-10;
};

/// One application of the Riccati map
///   P -> A'PA - A'PB (R + B'PB)^-1 B'PA + Q.
Matrix riccati_map(const Matrix& a, const Matrix& b, const Matrix& q,
                   const Matrix& r, const Matrix& p);

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// starting from P = Q. Converged when the max-abs update is below
/// tol * max(1, |P|_max). Throws ConvergenceError after max_iter sweeps and
/// InvalidInput when R is not positive definite or shapes disagree.
Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q,
                  const Matrix& r, const DareOptions& opts = {});

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Matrix& m);

}  // namespace koopkan
