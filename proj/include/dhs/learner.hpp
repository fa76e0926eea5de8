#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dhs/augment.hpp"
#include "dhs/numerics.hpp"

namespace dhs {

/// Quadratic Q-function matrix over z = [eps; du], split as
/// [[ee, ue'], [ue, uu]].
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(Matrix theta, long n, long m);

  const Matrix& full() const { return theta_; }
  long n() const { return n_; }
  long m() const { return m_; }

  auto ee() const { return theta_.topLeftCorner(n_, n_); }
  auto ue() const { return theta_.bottomLeftCorner(m_, n_); }
  auto uu() const { return theta_.bottomRightCorner(m_, m_); }

 private:
  Matrix theta_;
  long n_ = 0;
  long m_ = 0;
};

/// Q-function of the policy u = -Kx in closed form:
/// [[Q + A'PA, N + A'PB], [N' + B'PA, R + B'PB]] with P = P^K.
QMatrix model_theta(const AugmentedSystem& aug, const Matrix& P);

/// Samples z_k = [eps_k; du_k] (du is the applied, noisy input) and
/// zeta_k = [eps_{k+1}; -K eps_{k+1}] for the policy K that was running.
struct DataBatch {
  Matrix Z;
  Matrix Zeta;
  Matrix K;
  long first_step = 0;

  long n() const { return K.cols(); }
  long m() const { return K.rows(); }
  long samples() const { return Z.cols(); }
  void append(const DataBatch& more);
};

struct ProbingNoiseConfig {
  int sinusoids_per_channel = 4;
  double omega_min = 0.01 * 3.14159265358979323846;
  double omega_max = 0.9 * 3.14159265358979323846;
  double amplitude = 0.005;
  double decay = 0.999;
  /// Lower bound on the decay envelope, keeping some excitation alive.
  double floor = 0.0;
  std::uint64_t seed = 0;
};

/// es_k = max(decay^k, floor) sum_j amp sin(w_j k + phi_j), one set of frequencies per
/// channel. Frequencies are log-spaced over [omega_min, omega_max] and dealt
/// round-robin so no two channels share one. Phases are drawn from the seed.
class ProbingNoise {
 public:
  ProbingNoise(const ProbingNoiseConfig& config, long channels);

  Vector operator()(long k) const;

  long channels() const { return static_cast<long>(frequencies_.size()); }
  const std::vector<std::vector<double>>& frequencies() const {
    return frequencies_;
  }

 private:
  ProbingNoiseConfig config_;
  std::vector<std::vector<double>> frequencies_;
  std::vector<std::vector<double>> phases_;
};

/// Throws ValidationFailed when the config cannot be PE of order n+1.
void validate_noise(const ProbingNoiseConfig& config, long state_dim);

/// Samples per policy-evaluation batch: (n+1)m + n.
long required_samples(long n, long m);

struct PeReport {
  long rank = 0;
  long required = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  bool ok() const { return rank == required; }
};

PeReport pe_report(const DataBatch& batch);

/// Returns the report when rank(Z) = n + m, throws RankDeficientError
/// otherwise.
PeReport check_pe(const DataBatch& batch);

enum class EstimationMethod { Matrix, ScalarLeastSquares };

EstimationMethod parse_method(std::string_view name);
std::string_view to_string(EstimationMethod method);

/// Q-function of the policy that generated the batch, from data only.
///
/// Matrix: phi = Zeta Z^+ (exact when Z has full row rank), then solve
/// Theta = Qbar + phi' Theta phi.
/// ScalarLeastSquares: one scalar equation z'Theta z - zeta'Theta zeta =
/// z'Qbar z per sample, solved for the upper triangle of Theta.
QMatrix estimate_theta(const DataBatch& batch, const Matrix& Qbar,
                       EstimationMethod method = EstimationMethod::Matrix);

/// Greedy gain K = Theta_uu^{-1} Theta_ue.
Matrix improve_policy(const QMatrix& theta);

/// Same, but rejects a gain that does not stabilize (A, B).
Matrix improve_policy(const QMatrix& theta, const Matrix& A, const Matrix& B);

/// LQR gain of the nominal augmented model; NotStabilizable if it does not
/// stabilize that model.
Matrix initial_controller(const DhsPlant& nominal, const DispatchWeights& weights,
                          const Matrix& Qe, const Matrix& Re);

/// A process the learner can drive one input at a time.
class Environment {
 public:
  virtual ~Environment() = default;
  /// Current augmented state eps_k.
  virtual Vector state() const = 0;
  /// Applies du_k and advances to k+1.
  virtual void apply(const Vector& du) = 0;
  virtual long step_index() const = 0;
  /// Steps left before the environment refuses to advance.
  virtual long remaining() const = 0;
};

/// Runs `samples` steps of du = -K eps + es_k and records the batch.
DataBatch collect_batch(Environment& env, const Matrix& K,
                        const ProbingNoise& noise, long samples);

struct IterationRecord {
  int iteration = 0;
  long start_step = 0;
  long samples = 0;
  long pe_rank = 0;
  Matrix K_used;
  Matrix Theta;
  Matrix K_next;
  double gain_delta = 0.0;
  double oracle_distance = 0.0;  // NaN without an oracle gain
  double spectral_radius = 0.0;  // of A - B K_next; NaN without a model
};

struct PolicyIterationOptions {
  EstimationMethod method = EstimationMethod::Matrix;
  double eps = 1e-9;
  int iteration_cap = 50;
  /// Keep iterating after the stop rule fires until the environment runs out.
  bool stop_on_convergence = true;
  /// Collection extends in chunks of N up to this many N before giving up.
  int max_extension_factor = 10;
  ProbingNoiseConfig noise;
  /// Monitoring only: the learner never uses these to compute a gain.
  std::optional<Matrix> oracle_gain;
  std::optional<std::pair<Matrix, Matrix>> model;  // (A, B)
  /// Called after every improvement with the iteration number and new gain.
  std::function<void(int, const Matrix&)> on_update;
};

struct PolicyIterationResult {
  Matrix K;
  bool converged = false;
  long first_update_step = -1;
  std::vector<IterationRecord> log;
  /// First batch collected, kept for the identify-then-solve comparison.
  DataBatch first_batch;
};

/// Data-driven policy iteration from a stabilizing K0: collect a PE batch
/// under the current gain, estimate its Q-function, improve greedily, stop
/// when ||K_{i+1} - K_i||_F < eps.
PolicyIterationResult run_policy_iteration(Environment& env, const Matrix& K0,
                                           const Matrix& Qbar,
                                           const PolicyIterationOptions& options);

}  // namespace dhs
