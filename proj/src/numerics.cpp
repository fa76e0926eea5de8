#include "dhs/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dhs/error.hpp"

namespace dhs {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotContractive: return "NotContractive";
    case ErrorKind::NotStabilizable: return "NotStabilizable";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::InvalidTopology: return "InvalidTopology";
    case ErrorKind::SingularDiscretization: return "SingularDiscretization";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::HistoryTooShort: return "HistoryTooShort";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::SingularBlock: return "SingularBlock";
    case ErrorKind::DestabilizingUpdate: return "DestabilizingUpdate";
    case ErrorKind::IterationCapExceeded: return "IterationCapExceeded";
    case ErrorKind::HorizonExhausted: return "HorizonExhausted";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::ZeroReference: return "ZeroReference";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationFailed: return "ValidationFailed";
  }
  return "Unknown";
}

namespace {

void require_square(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(name) + " must be square, got " +
                    std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  }
}

Matrix lyapunov_kronecker(const Matrix& M, const Matrix& Q) {
  const long n = M.rows();
  // vec(M' X M) = (M' (x) M') vec(X) for column-major vec.
  Matrix system = Matrix::Identity(n * n, n * n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      system.block(i * n, j * n, n, n) -= M(j, i) * M.transpose();
    }
  }
  const Vector rhs = Eigen::Map<const Vector>(Q.data(), n * n);
  const Vector x = system.partialPivLu().solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), n, n);
}

// Smith doubling: X = sum_j (M')^j Q M^j, two terms per squaring.
Matrix lyapunov_doubling(const Matrix& M, const Matrix& Q) {
  Matrix X = Q;
  Matrix power = M;
  for (int iter = 0; iter < 64; ++iter) {
    const Matrix increment = power.transpose() * X * power;
    X += increment;
    if (increment.norm() <= 1e-12 * X.norm()) return X;
    power = power * power;
  }
  throw Error(ErrorKind::NoConvergence, "Lyapunov doubling iteration stalled");
}

}  // namespace

Matrix solve_discrete_lyapunov(const Matrix& M, const Matrix& Q) {
  require_square(M, "M");
  require_square(Q, "Q");
  if (M.rows() != Q.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "M and Q sizes differ");
  }
  if (M.size() == 0) return Q;
  const double radius = spectral_radius(M);
  if (!(radius < 1.0)) {
    throw Error(ErrorKind::NotContractive,
                "spectral radius " + std::to_string(radius) + " >= 1");
  }
  Matrix X = M.rows() * M.rows() <= kKroneckerUnknownLimit
                 ? lyapunov_kronecker(M, Q)
                 : lyapunov_doubling(M, Q);
  return symmetrize(X);
}

Matrix closed_loop_cost(const Matrix& Q, const Matrix& N, const Matrix& R,
                        const Matrix& K) {
  const Matrix NK = N * K;
  return symmetrize(Q - NK - NK.transpose() + K.transpose() * R * K);
}

namespace {

void check_lqr_dimensions(const Matrix& A, const Matrix& B, const Matrix& Q,
                          const Matrix& N, const Matrix& R) {
  require_square(A, "A");
  require_square(Q, "Q");
  require_square(R, "R");
  const long n = A.rows();
  const long m = B.cols();
  if (B.rows() != n || Q.rows() != n || N.rows() != n || N.cols() != m ||
      R.rows() != m) {
    throw Error(ErrorKind::DimensionMismatch, "inconsistent LQR dimensions");
  }
}

// One Hewer step: evaluate K, return the greedy gain and the value matrix.
std::pair<Matrix, Matrix> hewer_step(const Matrix& A, const Matrix& B,
                                     const Matrix& Q, const Matrix& N,
                                     const Matrix& R, const Matrix& K) {
  const Matrix P =
      solve_discrete_lyapunov(A - B * K, closed_loop_cost(Q, N, R, K));
  const Matrix Ruu = R + B.transpose() * P * B;
  const Matrix Rux = N.transpose() + B.transpose() * P * A;
  return {Ruu.ldlt().solve(Rux), P};
}

}  // namespace

Matrix stabilizing_gain(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& N, const Matrix& R) {
  check_lqr_dimensions(A, B, Q, N, R);
  Matrix K = Matrix::Zero(B.cols(), A.rows());
  double radius = spectral_radius(A);
  if (radius < 1.0) return K;

  double discount = 0.25 / (radius * radius);
  for (int round = 0; round < 200; ++round) {
    const double scale = std::sqrt(discount);
    const Matrix As = scale * A;
    const Matrix Bs = scale * B;
    // A handful of steps is enough: only stability of the result matters.
    for (int step = 0; step < 20; ++step) {
      Matrix next = hewer_step(As, Bs, Q, N, R, K).first;
      const double change = (next - K).norm();
      K = std::move(next);
      if (change <= 1e-9 * std::max(1.0, K.norm())) break;
    }
    radius = spectral_radius(A - B * K);
    if (radius < 1.0) return K;
    const double next_discount = std::min(1.0, 0.95 / (radius * radius));
    if (next_discount <= discount * (1.0 + 1e-12)) break;
    discount = next_discount;
  }
  throw Error(ErrorKind::NotStabilizable,
              "no stabilizing gain found (closed-loop radius " +
                  std::to_string(radius) + ")");
}

LqrSolution solve_lqr(const Matrix& A, const Matrix& B, const Matrix& Q,
                      const Matrix& N, const Matrix& R,
                      const LqrOptions& options) {
  check_lqr_dimensions(A, B, Q, N, R);
  LqrSolution out;
  Matrix K = stabilizing_gain(A, B, Q, N, R);
  Matrix P_prev;
  double best_change = std::numeric_limits<double>::infinity();
  for (int i = 0; i < options.max_iterations; ++i) {
    auto [next, P] = hewer_step(A, B, Q, N, R, K);
    K = std::move(next);
    out.iterations = i + 1;
    if (P_prev.size() != 0) {
      const double change = (P - P_prev).norm();
      const double scale = P_prev.norm();
      // Near the fixed point the change is rounding noise; once it stops
      // shrinking and sits within a few ulps of the tolerance, accept.
      if (change <= options.relative_tolerance * scale ||
          (change >= best_change &&
           change <= 1e3 * options.relative_tolerance * scale)) {
        out.P = std::move(P);
        out.K = std::move(K);
        return out;
      }
      best_change = std::min(best_change, change);
    }
    P_prev = std::move(P);
  }
  throw Error(ErrorKind::NoConvergence,
              "policy iteration did not converge in " +
                  std::to_string(options.max_iterations) + " iterations");
}

Matrix pseudoinverse(const Matrix& M) {
  if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = kRankTolerance * (s.size() ? s(0) : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (long i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

long numeric_rank(const Matrix& M) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = kRankTolerance * s(0);
  return static_cast<long>((s.array() > cutoff).count());
}

Matrix hankel(const Matrix& u, long order) {
  const long m = u.rows();
  const long length = u.cols();
  if (order < 1 || length < order) {
    throw Error(ErrorKind::SequenceTooShort,
                "need at least " + std::to_string(order) + " samples, got " +
                    std::to_string(length));
  }
  const long cols = length - order + 1;
  Matrix H(m * order, cols);
  for (long block = 0; block < order; ++block) {
    H.middleRows(block * m, m) = u.middleCols(block, cols);
  }
  return H;
}

double spectral_radius(const Matrix& M) {
  require_square(M, "matrix");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(M, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NoConvergence, "eigenvalue computation failed");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix controllability_matrix(const Matrix& A, const Matrix& B) {
  require_square(A, "A");
  if (B.rows() != A.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "A and B row counts differ");
  }
  const long n = A.rows();
  const long m = B.cols();
  Matrix C(n, n * m);
  if (n == 0) return C;
  C.leftCols(m) = B;
  for (long i = 1; i < n; ++i) {
    C.middleCols(i * m, m) = A * C.middleCols((i - 1) * m, m);
  }
  return C;
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

double min_eigenvalue(const Matrix& symmetric) {
  require_square(symmetric, "matrix");
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(symmetric),
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace dhs
