#pragma once

#include <string>
#include <vector>

#include "dhs/numerics.hpp"

namespace dhs {

enum class Role { Producer, Consumer };

struct HeatExchanger {
  std::string id;
  Role role = Role::Consumer;
  double volume = 1.0;        // m^3
  double through_flow = 1.0;  // m^3/s
};

struct Pipe {
  std::string from;
  std::string to;
  double flow = 1.0;  // m^3/s
};

/// Heat exchangers and the supply pipes between them. Every pipe joins a
/// producer and a consumer, and the pipe flows incident to an exchanger add
/// up to its through-flow.
struct NetworkTopology {
  std::vector<HeatExchanger> exchangers;
  std::vector<Pipe> pipes;

  long size() const { return static_cast<long>(exchangers.size()); }
  long index_of(const std::string& id) const;  // -1 if absent
  Vector volumes() const;
};

/// Throws InvalidTopology naming the first violated invariant.
void validate(const NetworkTopology& topology);

/// Flow matrix: -q_i on the diagonal, pipe flows between connected
/// producer/consumer pairs. Rows sum to zero for a valid topology.
Matrix build_lq(const NetworkTopology& topology);

/// Scales every off-diagonal coefficient by (1 + variation) and resets the
/// diagonal so rows still sum to zero.
Matrix vary_lq(const Matrix& lq, double variation);

/// Euler discretization T+ = Ad T + Bd (P + P_dis).
struct DhsPlant {
  Matrix Ad;
  Matrix Bd;
  Matrix Lq;
  Vector volumes;
  double tau = 0.0;

  long size() const { return Ad.rows(); }
};

DhsPlant discretize(const Matrix& lq, const Vector& volumes, double tau);
DhsPlant discretize(const NetworkTopology& topology, double tau);

Vector step(const DhsPlant& plant, const Vector& T, const Vector& P,
            const Vector& P_dis);

/// (n-1) x n bidiagonal marginal-cost difference matrix; row i is
/// f_i e_i - f_{i+1} e_{i+1}. `f` holds the diagonal of F.
Matrix build_fm(const Vector& f);

struct DispatchSolution {
  Vector P;  // optimal power (already weighted by 1/(rho c))
  Vector T;  // optimal temperature deviation
  double z = 0.0;
};

/// Steady-state economic dispatch: P minimizes 1/2 P'FP subject to
/// P + P_dis in range(Lq); T = -Lq^+ (P_dis + P) + z 1 with the offset z
/// minimizing 1/2 T'GT. `f`, `g` are the diagonals of F and G.
DispatchSolution solve_dispatch(const Matrix& lq, const Vector& f,
                                const Vector& g, const Vector& P_dis);

struct OptimalityReport {
  bool optimal = false;
  double marginal_cost_residual = 0.0;  // ||F^M P||_inf
  double weighted_sum_residual = 0.0;   // |1'G T|
  double balance_residual = 0.0;        // ||Lq T + P + P_dis||_inf
};

OptimalityReport check_optimality(const Matrix& lq, const Vector& P,
                                  const Vector& T, const Vector& f,
                                  const Vector& g, const Vector& P_dis,
                                  double tol);

}  // namespace dhs
