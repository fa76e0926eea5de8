#include "dhs/network.hpp"

#include <cmath>
#include <queue>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dhs/error.hpp"

namespace dhs {

long NetworkTopology::index_of(const std::string& id) const {
  for (long i = 0; i < size(); ++i) {
    if (exchangers[static_cast<std::size_t>(i)].id == id) return i;
  }
  return -1;
}

Vector NetworkTopology::volumes() const {
  Vector v(size());
  for (long i = 0; i < size(); ++i) {
    v(i) = exchangers[static_cast<std::size_t>(i)].volume;
  }
  return v;
}

void validate(const NetworkTopology& topology) {
  const long n = topology.size();
  if (n < 2) {
    throw Error(ErrorKind::InvalidTopology, "need at least two exchangers");
  }
  for (long i = 0; i < n; ++i) {
    const auto& hx = topology.exchangers[static_cast<std::size_t>(i)];
    if (!(hx.volume > 0.0) || !(hx.through_flow > 0.0)) {
      throw Error(ErrorKind::InvalidTopology,
                  "exchanger " + hx.id + " needs positive volume and flow");
    }
    if (topology.index_of(hx.id) != i) {
      throw Error(ErrorKind::InvalidTopology, "duplicate exchanger id " + hx.id);
    }
  }

  std::vector<std::vector<long>> adjacency(static_cast<std::size_t>(n));
  Vector incident = Vector::Zero(n);
  for (const auto& pipe : topology.pipes) {
    const long a = topology.index_of(pipe.from);
    const long b = topology.index_of(pipe.to);
    if (a < 0 || b < 0) {
      throw Error(ErrorKind::InvalidTopology,
                  "pipe " + pipe.from + "->" + pipe.to +
                      " references an unknown exchanger");
    }
    if (a == b) {
      throw Error(ErrorKind::InvalidTopology, "pipe loops on " + pipe.from);
    }
    if (topology.exchangers[static_cast<std::size_t>(a)].role ==
        topology.exchangers[static_cast<std::size_t>(b)].role) {
      throw Error(ErrorKind::InvalidTopology,
                  "pipe " + pipe.from + "->" + pipe.to +
                      " must join a producer and a consumer");
    }
    if (!(pipe.flow > 0.0)) {
      throw Error(ErrorKind::InvalidTopology,
                  "pipe " + pipe.from + "->" + pipe.to + " has no flow");
    }
    incident(a) += pipe.flow;
    incident(b) += pipe.flow;
    adjacency[static_cast<std::size_t>(a)].push_back(b);
    adjacency[static_cast<std::size_t>(b)].push_back(a);
  }

  for (long i = 0; i < n; ++i) {
    const auto& hx = topology.exchangers[static_cast<std::size_t>(i)];
    if (std::abs(incident(i) - hx.through_flow) >
        1e-9 * std::max(1.0, hx.through_flow)) {
      throw Error(ErrorKind::InvalidTopology,
                  "flow conservation fails at " + hx.id + ": pipes carry " +
                      std::to_string(incident(i)) + ", exchanger flow is " +
                      std::to_string(hx.through_flow));
    }
  }

  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::queue<long> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const long at = frontier.front();
    frontier.pop();
    for (long next : adjacency[static_cast<std::size_t>(at)]) {
      if (!seen[static_cast<std::size_t>(next)]) {
        seen[static_cast<std::size_t>(next)] = true;
        frontier.push(next);
      }
    }
  }
  for (long i = 0; i < n; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) {
      throw Error(ErrorKind::InvalidTopology,
                  "exchanger " + topology.exchangers[static_cast<std::size_t>(i)].id +
                      " is disconnected");
    }
  }
}

Matrix build_lq(const NetworkTopology& topology) {
  validate(topology);
  const long n = topology.size();
  Matrix lq = Matrix::Zero(n, n);
  for (long i = 0; i < n; ++i) {
    lq(i, i) = -topology.exchangers[static_cast<std::size_t>(i)].through_flow;
  }
  for (const auto& pipe : topology.pipes) {
    const long a = topology.index_of(pipe.from);
    const long b = topology.index_of(pipe.to);
    lq(a, b) += pipe.flow;
    lq(b, a) += pipe.flow;
  }
  return lq;
}

Matrix vary_lq(const Matrix& lq, double variation) {
  if (!(1.0 + variation > 0.0)) {
    throw Error(ErrorKind::InvalidTopology,
                "variation must keep flows positive");
  }
  Matrix out = lq;
  for (long i = 0; i < out.rows(); ++i) {
    double off_diagonal = 0.0;
    for (long j = 0; j < out.cols(); ++j) {
      if (i == j) continue;
      out(i, j) *= 1.0 + variation;
      off_diagonal += out(i, j);
    }
    out(i, i) = -off_diagonal;
  }
  return out;
}

DhsPlant discretize(const Matrix& lq, const Vector& volumes, double tau) {
  const long n = lq.rows();
  if (lq.cols() != n || volumes.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "Lq and volumes disagree");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorKind::SingularDiscretization, "sampling period must be > 0");
  }
  if ((volumes.array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidTopology, "volumes must be positive");
  }
  const Matrix step_matrix = tau * volumes.cwiseInverse().asDiagonal() * lq;
  Eigen::EigenSolver<Matrix> solver(step_matrix, false);
  for (long i = 0; i < n; ++i) {
    if (std::abs(solver.eigenvalues()(i) + 1.0) < 1e-9) {
      throw Error(ErrorKind::SingularDiscretization,
                  "-1 is an eigenvalue of tau E Lq; Ad is singular");
    }
  }
  DhsPlant plant;
  plant.Ad = Matrix::Identity(n, n) + step_matrix;
  plant.Bd = Matrix(tau * volumes.cwiseInverse().asDiagonal());
  plant.Lq = lq;
  plant.volumes = volumes;
  plant.tau = tau;
  return plant;
}

DhsPlant discretize(const NetworkTopology& topology, double tau) {
  return discretize(build_lq(topology), topology.volumes(), tau);
}

Vector step(const DhsPlant& plant, const Vector& T, const Vector& P,
            const Vector& P_dis) {
  const long n = plant.size();
  if (T.size() != n || P.size() != n || P_dis.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "state/input size mismatch");
  }
  return plant.Ad * T + plant.Bd * (P + P_dis);
}

Matrix build_fm(const Vector& f) {
  const long n = f.size();
  if (n < 2) {
    throw Error(ErrorKind::DimensionMismatch, "F^M needs at least two nodes");
  }
  if ((f.array() <= 0.0).any()) {
    throw Error(ErrorKind::DimensionMismatch, "cost coefficients must be > 0");
  }
  Matrix fm = Matrix::Zero(n - 1, n);
  for (long i = 0; i + 1 < n; ++i) {
    fm(i, i) = f(i);
    fm(i, i + 1) = -f(i + 1);
  }
  return fm;
}

namespace {

// Orthonormal basis of the left nullspace of lq (columns).
Matrix left_nullspace(const Matrix& lq) {
  Eigen::JacobiSVD<Matrix> svd(lq, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  const double cutoff = kRankTolerance * (s.size() && s(0) > 0 ? s(0) : 1.0);
  long rank = 0;
  for (long i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++rank;
  }
  return svd.matrixU().rightCols(lq.rows() - rank);
}

}  // namespace

DispatchSolution solve_dispatch(const Matrix& lq, const Vector& f,
                                const Vector& g, const Vector& P_dis) {
  const long n = lq.rows();
  if (lq.cols() != n || f.size() != n || g.size() != n || P_dis.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "dispatch inputs disagree");
  }
  if ((f.array() <= 0.0).any() || (g.array() <= 0.0).any()) {
    throw Error(ErrorKind::Infeasible, "F and G must be positive diagonal");
  }

  // KKT of min 1/2 P'FP s.t. W'(P + P_dis) = 0 with W spanning null(Lq').
  const Matrix W = left_nullspace(lq);
  DispatchSolution out;
  if (W.cols() == 0) {
    out.P = Vector::Zero(n);
  } else {
    const Matrix FinvW = f.cwiseInverse().asDiagonal() * W;
    const Vector multiplier =
        (W.transpose() * FinvW).ldlt().solve(W.transpose() * P_dis);
    out.P = -FinvW * multiplier;
  }

  const Vector base = -pseudoinverse(lq) * (P_dis + out.P);
  out.z = -g.dot(base) / g.sum();
  out.T = base + Vector::Constant(n, out.z);

  const double balance = (lq * out.T + out.P + P_dis).lpNorm<Eigen::Infinity>();
  const double scale = 1.0 + P_dis.lpNorm<Eigen::Infinity>();
  if (!(balance <= 1e-8 * scale)) {
    throw Error(ErrorKind::Infeasible,
                "no balanced steady state (residual " + std::to_string(balance) +
                    ")");
  }
  return out;
}

OptimalityReport check_optimality(const Matrix& lq, const Vector& P,
                                  const Vector& T, const Vector& f,
                                  const Vector& g, const Vector& P_dis,
                                  double tol) {
  OptimalityReport report;
  report.marginal_cost_residual = (build_fm(f) * P).lpNorm<Eigen::Infinity>();
  report.weighted_sum_residual = std::abs(g.dot(T));
  report.balance_residual = (lq * T + P + P_dis).lpNorm<Eigen::Infinity>();
  report.optimal = report.marginal_cost_residual <= tol &&
                   report.weighted_sum_residual <= tol &&
                   report.balance_residual <= tol;
  return report;
}

}  // namespace dhs
