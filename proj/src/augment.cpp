#include "dhs/augment.hpp"

#include <string>

#include "dhs/error.hpp"

namespace dhs {

namespace {

void check_weights(const DispatchWeights& weights, long n) {
  if (weights.f.size() != n || weights.g.size() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "cost weights must have one entry per exchanger");
  }
}

// Lambda_y 1'G: zero except the last row, which is g'.
Matrix output_row_block(const Vector& g) {
  const long n = g.size();
  Matrix block = Matrix::Zero(n, n);
  block.row(n - 1) = g.transpose();
  return block;
}

}  // namespace

Matrix lambda_p(const Vector& f) {
  const long n = f.size();
  Matrix out = Matrix::Zero(n, n);
  out.topRows(n - 1) = build_fm(f);
  return out;
}

OutputError output_and_error(const Vector& T, const Vector& P,
                             const DispatchWeights& weights) {
  const long n = T.size();
  if (P.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "T and P sizes differ");
  }
  check_weights(weights, n);
  OutputError out;
  out.y = weights.g.dot(T);
  out.e = lambda_p(weights.f) * P;
  out.e(n - 1) += out.y;
  return out;
}

Matrix AugmentedSystem::effective_cost(const Matrix& K) const {
  return closed_loop_cost(Q, N, R, K);
}

Matrix AugmentedSystem::value_matrix(const Matrix& K) const {
  return solve_discrete_lyapunov(closed_loop(K), effective_cost(K));
}

Matrix phi_matrix(const Matrix& A, const Matrix& B, const Matrix& K) {
  const long n = A.rows();
  const long m = B.cols();
  if (K.rows() != m || K.cols() != n || B.rows() != n) {
    throw Error(ErrorKind::DimensionMismatch, "phi_K dimensions disagree");
  }
  Matrix phi(n + m, n + m);
  phi.topLeftCorner(n, n) = A;
  phi.topRightCorner(n, m) = B;
  phi.bottomLeftCorner(m, n) = -K * A;
  phi.bottomRightCorner(m, m) = -K * B;
  return phi;
}

long augmentation_rank(const DhsPlant& plant, const DispatchWeights& weights) {
  const long n = plant.size();
  check_weights(weights, n);
  Matrix M(2 * n, 2 * n);
  M.topLeftCorner(n, n) = plant.Ad - Matrix::Identity(n, n);
  M.topRightCorner(n, n) = plant.Bd;
  M.bottomLeftCorner(n, n) = output_row_block(weights.g);
  M.bottomRightCorner(n, n) = lambda_p(weights.f);
  return numeric_rank(M);
}

AugmentedSystem build_augmented(const DhsPlant& plant,
                                const DispatchWeights& weights,
                                const Matrix& Qe, const Matrix& Re) {
  const long nt = plant.size();
  check_weights(weights, nt);
  if (Qe.rows() != nt || Qe.cols() != nt || Re.rows() != nt ||
      Re.cols() != nt) {
    throw Error(ErrorKind::DimensionMismatch, "Q_e and R_e must be n_T x n_T");
  }
  if (min_eigenvalue(Qe) <= 0.0 || min_eigenvalue(Re) <= 0.0) {
    throw Error(ErrorKind::AssumptionViolated,
                "Q_e and R_e must be positive definite");
  }
  const long rank = augmentation_rank(plant, weights);
  if (rank < 2 * nt) {
    throw Error(ErrorKind::AssumptionViolated,
                "augmentation matrix has rank " + std::to_string(rank) +
                    ", needs " + std::to_string(2 * nt));
  }

  const Matrix output_rows = output_row_block(weights.g);
  const Matrix Lp = lambda_p(weights.f);
  const Matrix I = Matrix::Identity(nt, nt);

  AugmentedSystem aug;
  aug.n = 2 * nt;
  aug.m = nt;
  aug.A = Matrix::Zero(2 * nt, 2 * nt);
  aug.A.topLeftCorner(nt, nt) = plant.Ad;
  aug.A.bottomLeftCorner(nt, nt) = output_rows;
  aug.A.bottomRightCorner(nt, nt) = I;
  aug.B.resize(2 * nt, nt);
  aug.B << plant.Bd, Lp;
  aug.C.resize(nt, 2 * nt);
  aug.C << output_rows, I;
  aug.D = Lp;

  aug.Qe = Qe;
  aug.Re = Re;
  aug.Q = symmetrize(aug.C.transpose() * Qe * aug.C);
  aug.N = aug.C.transpose() * Qe * aug.D;
  aug.R = symmetrize(Re + aug.D.transpose() * Qe * aug.D);
  aug.Qbar.resize(3 * nt, 3 * nt);
  aug.Qbar << aug.Q, aug.N, aug.N.transpose(), aug.R;
  return aug;
}

Vector AugmentedState::stacked() const {
  Vector out(delta_T.size() + e_prev.size());
  out << delta_T, e_prev;
  return out;
}

LiftedTrajectory lift_trajectory(const Matrix& T_hist, const Matrix& P_hist,
                                 const DispatchWeights& weights) {
  const long nt = T_hist.rows();
  const long steps = T_hist.cols();
  if (P_hist.rows() != nt || P_hist.cols() != steps) {
    throw Error(ErrorKind::DimensionMismatch, "T and P histories misaligned");
  }
  if (steps < 2) {
    throw Error(ErrorKind::HistoryTooShort,
                "need at least two samples, got " + std::to_string(steps));
  }
  LiftedTrajectory out;
  out.eps.resize(2 * nt, steps);
  out.du.resize(nt, steps);
  for (long k = 0; k < steps; ++k) {
    const long prev = k == 0 ? 0 : k - 1;
    out.eps.col(k).head(nt) = T_hist.col(k) - T_hist.col(prev);
    out.eps.col(k).tail(nt) =
        output_and_error(T_hist.col(prev), P_hist.col(prev), weights).e;
    out.du.col(k) = P_hist.col(k) - P_hist.col(prev);
  }
  return out;
}

}  // namespace dhs
