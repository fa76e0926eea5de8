#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dhs/augment.hpp"
#include "dhs/baseline.hpp"
#include "dhs/learner.hpp"
#include "dhs/network.hpp"

namespace dhs {

enum class DisturbanceMode { Constant, Impulse, Piecewise };

struct DisturbanceSegment {
  long start = 0;
  long end = -1;  // exclusive; negative means open-ended
  Vector P_dis;
};

/// Load disturbances over time; zero outside every segment.
struct DisturbanceSchedule {
  DisturbanceMode mode = DisturbanceMode::Constant;
  std::vector<DisturbanceSegment> segments;

  Vector at(long k, long n) const;
  /// Segments ordered, non-overlapping, sized n.
  void validate(long n) const;
};

/// How the simulator fills in the history before k = 0.
enum class Prehistory {
  /// T_{-1} solves the plant equation backwards, so the first transition
  /// obeys the model under the k = 0 disturbance.
  Consistent,
  /// T_{-1} = T_0: the plant was at rest and any disturbance acting at k = 0
  /// enters as a step.
  Rest,
};

struct LearningSettings {
  EstimationMethod method = EstimationMethod::Matrix;
  double eps = 1e-9;
  int iteration_cap = 50;
  bool stop_on_convergence = true;
};

/// Everything needed for one closed-loop run.
struct Scenario {
  NetworkTopology topology;
  double tau = 1.0;
  DispatchWeights weights;
  Matrix Qe;
  Matrix Re;
  DisturbanceSchedule disturbance;
  Vector T0;  // temperature deviation at k = 0
  Vector P0;  // power held before k = 0
  Prehistory prehistory = Prehistory::Consistent;
  ProbingNoiseConfig noise;
  LearningSettings learning;
  double variation = 0.0;     // applied to the true plant's Lq
  double nonlinearity = 0.0;  // w in eps+ = A eps + B du + w eps.^2
  long horizon = 2000;
  std::uint64_t seed = 0;
  double divergence_bound = 1e6;

  long size() const { return topology.size(); }
};

/// Nominal and true models for a scenario, plus the gains derived from them.
struct ScenarioModels {
  DhsPlant nominal;
  DhsPlant truth;
  AugmentedSystem nominal_aug;
  AugmentedSystem true_aug;
  Matrix K0;
  OptimalRegulator optimum;  // of the true plant
};

/// Throws NotStabilizable when K0 from the nominal model fails on the
/// varied plant.
ScenarioModels build_models(const Scenario& scenario);

struct StepRecord {
  long k = 0;
  Vector T;
  Vector P;
  Vector e;
  Vector du;
  double stage_cost = 0.0;
  int gain_id = 0;
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  std::vector<IterationRecord> iterations;
};

/// The physical plant under incremental power commands, seen through the
/// augmented state eps_k = [T_k - T_{k-1}; e_{k-1}].
///
/// With w > 0 the plant carries two accumulated offsets, one on the
/// temperatures and one on the measured error, so that the augmented
/// recursion picks up exactly + w eps_k.^2.
class DhsSimulator final : public Environment {
 public:
  DhsSimulator(const DhsPlant& plant, const Scenario& scenario);

  Vector state() const override;
  void apply(const Vector& du) override;
  long step_index() const override { return k_; }
  long remaining() const override { return horizon_ - k_; }

  void set_gain_id(int id) { gain_id_ = id; }
  const TrajectoryLog& log() const { return log_; }
  TrajectoryLog take_log() { return std::move(log_); }

 private:
  DhsPlant plant_;
  DispatchWeights weights_;
  Matrix Qe_;
  Matrix Re_;
  DisturbanceSchedule disturbance_;
  double w_;
  long horizon_;
  double bound_;

  long k_ = 0;
  int gain_id_ = 0;
  Vector T_;
  Vector T_prev_;
  Vector P_prev_;
  Vector e_prev_;
  Vector temperature_offset_;
  Vector error_offset_;
  TrajectoryLog log_;
};

enum class ControllerMode { Learn, Fixed, Nominal };

struct SimulationResult {
  TrajectoryLog log;
  Matrix final_gain;
  std::optional<PolicyIterationResult> learning;
};

/// Learn: policy iteration from K0, then the learned gain without probing.
/// Fixed: `fixed_gain` throughout. Nominal: K0 throughout. Fixed and Nominal
/// apply no probing noise.
SimulationResult simulate(const Scenario& scenario, const ScenarioModels& models,
                          ControllerMode mode,
                          const std::optional<Matrix>& fixed_gain = std::nullopt);

/// ||K - K_ref||_F / ||K_ref||_F; ZeroReference when K_ref = 0.
double gain_distance(const Matrix& K, const Matrix& K_ref);

/// 1/2 (e'Q_e e + du'R_e du) per step.
std::vector<double> stage_cost_series(const TrajectoryLog& log, const Matrix& Qe,
                                      const Matrix& Re);

double cumulative_cost(const std::vector<double>& series, long from, long to);

/// Final-state optimality against the dispatch oracle of the true plant.
struct EquilibriumReport {
  OptimalityReport optimality;
  double error_norm = 0.0;          // ||e||_inf at the last step
  double power_mismatch = 0.0;      // ||P - P*||_inf
  double temperature_mismatch = 0.0;
  DispatchSolution dispatch;
};

EquilibriumReport equilibrium_report(const Scenario& scenario,
                                     const ScenarioModels& models,
                                     const TrajectoryLog& log);

/// Monotonicity of a policy-iteration log, checked against the true model.
struct MonotonicityReport {
  double theta_decrease_min_eig = 0.0;   // min_i eig(Theta_i - Theta_{i+1})
  double value_decrease_min_eig = 0.0;   // min_i eig(P^{K_i} - P^{K_{i+1}})
  double theta_above_optimum_min_eig = 0.0;  // min_i eig(Theta_i - Theta_*)
  double max_theta_error = 0.0;  // max_i ||Theta_i - Theta^{K_i}|| / ||Theta^{K_i}||
  double max_spectral_radius = 0.0;
};

MonotonicityReport monotonicity_report(const ScenarioModels& models,
                                       const std::vector<IterationRecord>& log);

inline constexpr std::string_view kExperimentNames[] = {
    "variation", "disturbance", "nominal-comparison", "indirect-comparison"};

bool is_experiment(std::string_view name);

/// A scenario plus the sweep grid of one experiment.
struct ExperimentPlan {
  std::string name;
  Scenario base;
  std::vector<double> variations;
  std::vector<double> nonlinearities;
  std::string config_hash;
};

struct ExperimentReport {
  nlohmann::json summary;
  /// Trajectory CSVs keyed by file suffix; "" is the primary one.
  std::vector<std::pair<std::string, std::string>> trajectories;
  std::string iterations_csv;
};

/// Runs the named scenario. Sweep cases run concurrently and are merged in
/// grid order, so the output does not depend on scheduling.
ExperimentReport run_experiment(const ExperimentPlan& plan);

std::string trajectory_csv(const TrajectoryLog& log);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace dhs
