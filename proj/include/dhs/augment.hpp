#pragma once

#include "dhs/network.hpp"
#include "dhs/numerics.hpp"

namespace dhs {

/// Diagonal cost weights of the dispatch problem.
struct DispatchWeights {
  Vector f;  // marginal production/load cost, F = diag(f)
  Vector g;  // temperature deviation cost, G = diag(g)
};

struct OutputError {
  double y = 0.0;  // 1'G T
  Vector e;        // [F^M P; y]
};

/// y = 1'GT and e = Lambda_p P + Lambda_y y. e vanishes exactly when the
/// marginal costs are equal and the weighted temperature sum is zero.
OutputError output_and_error(const Vector& T, const Vector& P,
                             const DispatchWeights& weights);

/// [F^M; 0], n_T x n_T.
Matrix lambda_p(const Vector& f);

/// Error dynamics in (dT_k, e_{k-1}) with input du_k = P_k - P_{k-1}:
///   eps+ = A eps + B du,   e = C eps + D du,
/// and the stage cost e'Q_e e + du'R_e du rewritten over (eps, du).
struct AugmentedSystem {
  Matrix A, B, C, D;
  Matrix Q, N, R;  // cost blocks over eps and du
  Matrix Qbar;     // [[Q, N], [N', R]]
  Matrix Qe, Re;
  long n = 0;  // state dimension, 2 n_T
  long m = 0;  // input dimension, n_T

  /// Q_eff(K) = Q - NK - K'N' + K'RK.
  Matrix effective_cost(const Matrix& K) const;
  /// Closed-loop value matrix P^K, the solution of P = (A-BK)'P(A-BK) + Q_eff.
  Matrix value_matrix(const Matrix& K) const;
  Matrix closed_loop(const Matrix& K) const { return A - B * K; }
};

/// Stacked (eps, du) state-input transition under u = -Kx:
/// [[A, B], [-KA, -KB]].
Matrix phi_matrix(const Matrix& A, const Matrix& B, const Matrix& K);

/// Rank of [[tau E Lq, tau E], [Lambda_y 1'G, Lambda_p]]; full rank 2 n_T
/// makes (A, B) controllable.
long augmentation_rank(const DhsPlant& plant, const DispatchWeights& weights);

/// Throws AssumptionViolated (with the observed rank) when
/// augmentation_rank falls short of 2 n_T.
AugmentedSystem build_augmented(const DhsPlant& plant,
                                const DispatchWeights& weights,
                                const Matrix& Qe, const Matrix& Re);

struct AugmentedState {
  Vector delta_T;
  Vector e_prev;

  Vector stacked() const;
};

struct LiftedTrajectory {
  Matrix eps;  // n x K, column k is eps_k
  Matrix du;   // m x K, column k is du_k
};

/// Histories are n_T x K (column k = time k). Column 0 uses the convention
/// T_{-1} = T_0 and P_{-1} = P_0, so eps_0 = [0; e(T_0, P_0)] and du_0 = 0.
LiftedTrajectory lift_trajectory(const Matrix& T_hist, const Matrix& P_hist,
                                 const DispatchWeights& weights);

}  // namespace dhs
