#pragma once

#include <Eigen/Dense>

namespace dhs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Singular values below this fraction of the largest one count as zero.
/// Shared by every rank decision (PE checks, pseudoinverse, identification).
inline constexpr double kRankTolerance = 1e-8;

/// Systems with more unknowns than this (n*n) are solved by doubling
/// iteration instead of the dense Kronecker system.
inline constexpr long kKroneckerUnknownLimit = 1600;

/// Solves X = M' X M + Q for X. Requires spectral_radius(M) < 1.
Matrix solve_discrete_lyapunov(const Matrix& M, const Matrix& Q);

struct LqrSolution {
  Matrix P;  // value matrix, n x n
  Matrix K;  // optimal gain, m x n, u = -K x
  int iterations = 0;
};

struct LqrOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-12;
};

/// Infinite-horizon discrete LQR with cross term:
///   min sum x'Qx + 2x'Nu + u'Ru,  x+ = Ax + Bu.
///
/// Solved by Hewer policy iteration. The seed gain comes from a discounted
/// homotopy: K = 0 stabilizes sqrt(g)A for small g, and each round of
/// policy iteration on the discounted problem lets g grow until g = 1.
LqrSolution solve_lqr(const Matrix& A, const Matrix& B, const Matrix& Q,
                      const Matrix& N, const Matrix& R,
                      const LqrOptions& options = {});

/// A gain K with spectral_radius(A - BK) < 1, or NotStabilizable.
Matrix stabilizing_gain(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& N, const Matrix& R);

/// Q - NK - K'N' + K'RK, the per-step cost matrix under u = -Kx.
Matrix closed_loop_cost(const Matrix& Q, const Matrix& N, const Matrix& R,
                        const Matrix& K);

Matrix pseudoinverse(const Matrix& M);

/// Number of singular values above kRankTolerance * sigma_max.
long numeric_rank(const Matrix& M);

/// Block-Hankel matrix of order L from the columns of u (m x N):
/// column j stacks u_j, u_{j+1}, ..., u_{j+L-1}.
Matrix hankel(const Matrix& u, long order);

double spectral_radius(const Matrix& M);

/// [B, AB, ..., A^{n-1}B]
Matrix controllability_matrix(const Matrix& A, const Matrix& B);

Matrix symmetrize(const Matrix& M);

double min_eigenvalue(const Matrix& symmetric);

}  // namespace dhs
