#include <gtest/gtest.h>

#include <charconv>
#include <cmath>
#include <limits>

#include "dhs/harness.hpp"
#include "test_support.hpp"

using namespace dhs;
using dhs::test::rows;
using dhs::test::throws_kind;
using dhs::test::vec;

namespace {

TrajectoryLog truncated(const TrajectoryLog& log, long end) {
  TrajectoryLog out;
  out.steps.assign(log.steps.begin(), log.steps.begin() + end);
  return out;
}

Scenario piecewise_scenario() {
  Scenario s = test::desk_scenario();
  s.horizon = 2000;
  s.disturbance.mode = DisturbanceMode::Piecewise;
  s.disturbance.segments = {{0, 600, vec({0.0, -1.0, -0.5})},
                            {600, 1200, vec({0.0, -1.5, -0.8})},
                            {1200, -1, vec({0.0, -0.7, -0.4})}};
  return s;
}

}  // namespace

TEST(Simulator, ZeroStaysZero) {
  Scenario s = test::desk_scenario();
  s.disturbance.segments.clear();
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Nominal);
  ASSERT_EQ(static_cast<long>(sim.log.steps.size()), s.horizon);
  for (const StepRecord& r : sim.log.steps) {
    EXPECT_EQ(r.T.norm(), 0.0);
    EXPECT_EQ(r.P.norm(), 0.0);
    EXPECT_EQ(r.e.norm(), 0.0);
    EXPECT_EQ(r.stage_cost, 0.0);
  }
}

TEST(Simulator, StageCostIsQuadraticInAugmentedState) {
  Scenario s = test::desk_scenario();
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Learn);
  const AugmentedSystem& aug = models.true_aug;
  const auto& steps = sim.log.steps;
  for (std::size_t k = 1; k < 200; ++k) {
    Vector z(9);
    z << steps[k].T - steps[k - 1].T, steps[k - 1].e, steps[k].du;
    EXPECT_NEAR(steps[k].stage_cost, 0.5 * z.dot(aug.Qbar * z),
                1e-12 * (1.0 + steps[k].stage_cost));
    // and the augmented recursion holds between logged steps
    if (k + 1 < steps.size()) {
      Vector next(6);
      next << steps[k + 1].T - steps[k].T, steps[k].e;
      EXPECT_LT((aug.A * z.head(6) + aug.B * z.tail(3) - next).norm(), 1e-12);
    }
  }
}

TEST(Simulator, ConsistentPrehistoryMatchesModelFromTheFirstStep) {
  Scenario s = test::desk_scenario();
  s.T0 = vec({0.3, -0.2, 0.1});
  for (Prehistory p : {Prehistory::Consistent, Prehistory::Rest}) {
    s.prehistory = p;
    const ScenarioModels models = build_models(s);
    DhsSimulator sim(models.truth, s);
    const Vector eps0 = sim.state();
    const Vector du = vec({0.1, 0.0, -0.1});
    sim.apply(du);
    const double gap = (models.true_aug.A * eps0 + models.true_aug.B * du - sim.state()).norm();
    if (p == Prehistory::Consistent) {
      EXPECT_LT(gap, 1e-12);
    } else {
      EXPECT_GT(gap, 1e-3);
    }
  }
}

TEST(Simulator, ConstantLoadConvergesToDispatch) {
  const Scenario s = test::desk_scenario();
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Learn);
  ASSERT_TRUE(sim.learning && sim.learning->converged);
  const EquilibriumReport r = equilibrium_report(s, models, sim.log);
  EXPECT_TRUE(r.optimality.optimal);
  EXPECT_LT(r.power_mismatch, 1e-6);
  EXPECT_LT(r.error_norm, 1e-6);
  EXPECT_LT(gain_distance(sim.final_gain, models.optimum.K), 1e-4);
}

TEST(Simulator, ReconvergesAfterEveryDisturbanceChange) {
  const Scenario s = piecewise_scenario();
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Fixed, models.optimum.K);
  for (long end : {600L, 1200L, 2000L}) {
    const EquilibriumReport r = equilibrium_report(s, models, truncated(sim.log, end));
    EXPECT_TRUE(r.optimality.optimal) << end;
    EXPECT_LT(r.power_mismatch, 1e-8) << end;
  }
}

TEST(Simulator, ImpulseDecaysBackToRest) {
  Scenario s = test::desk_scenario();
  s.disturbance.mode = DisturbanceMode::Impulse;
  s.disturbance.segments = {{100, 103, vec({0.0, -4.0, -2.5})}};
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Fixed, models.optimum.K);
  EXPECT_GT(sim.log.steps[110].T.norm(), 1e-2);
  const EquilibriumReport r = equilibrium_report(s, models, sim.log);
  EXPECT_TRUE(r.optimality.optimal);
  EXPECT_LT(sim.log.steps.back().P.norm(), 1e-8);
}

TEST(Simulator, DivergenceIsReported) {
  Scenario s = test::desk_scenario();
  s.divergence_bound = 0.1;
  const ScenarioModels models = build_models(s);
  EXPECT_TRUE(throws_kind([&] { simulate(s, models, ControllerMode::Nominal); },
                          ErrorKind::Diverged));
}

TEST(Simulator, UnstableInitialControllerIsRefused) {
  Scenario s = test::desk_scenario();
  s.variation = -0.99;
  s.tau = 6.0;
  EXPECT_TRUE(throws_kind([&] { build_models(s); }, ErrorKind::NotStabilizable));
}

TEST(Simulator, ContinuousUpdatesReachTheSameEquilibrium) {
  Scenario s = test::desk_scenario();
  s.horizon = 1500;
  const ScenarioModels models = build_models(s);
  const SimulationResult stopped = simulate(s, models, ControllerMode::Learn);
  s.learning.stop_on_convergence = false;
  const SimulationResult running = simulate(s, models, ControllerMode::Learn);
  EXPECT_GT(running.log.iterations.size(), stopped.log.iterations.size());
  EXPECT_LT(gain_distance(running.final_gain, models.optimum.K), 1e-4);
  const EquilibriumReport a = equilibrium_report(s, models, stopped.log);
  const EquilibriumReport b = equilibrium_report(s, models, running.log);
  EXPECT_TRUE(b.optimality.optimal);
  EXPECT_LT((stopped.log.steps.back().P - running.log.steps.back().P).cwiseAbs().maxCoeff(),
            1e-6);
  EXPECT_LT(std::abs(a.power_mismatch - b.power_mismatch), 1e-6);
}

TEST(Schedule, Validation) {
  DisturbanceSchedule d;
  d.segments = {{0, 10, vec({0.0, 1.0, 0.0})}, {10, -1, vec({0.0, 2.0, 0.0})}};
  EXPECT_NO_THROW(d.validate(3));
  EXPECT_EQ(d.at(9, 3), vec({0.0, 1.0, 0.0}));
  EXPECT_EQ(d.at(500, 3), vec({0.0, 2.0, 0.0}));
  EXPECT_TRUE(throws_kind([&] { d.validate(2); }, ErrorKind::ValidationFailed));

  DisturbanceSchedule overlap = d;
  overlap.segments[1].start = 5;
  EXPECT_TRUE(throws_kind([&] { overlap.validate(3); }, ErrorKind::ValidationFailed));

  DisturbanceSchedule empty_range = d;
  empty_range.segments[0].end = 0;
  EXPECT_TRUE(throws_kind([&] { empty_range.validate(3); }, ErrorKind::ValidationFailed));

  DisturbanceSchedule bad = d;
  bad.segments[0].P_dis(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(throws_kind([&] { bad.validate(3); }, ErrorKind::ValidationFailed));

  DisturbanceSchedule gap;
  gap.segments = {{5, 7, vec({1.0})}};
  EXPECT_EQ(gap.at(3, 1), vec({0.0}));
  EXPECT_EQ(gap.at(7, 1), vec({0.0}));
}

TEST(Metrics, GainDistance) {
  const Matrix K = rows({{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(gain_distance(K, K), 0.0);
  EXPECT_DOUBLE_EQ(gain_distance(2.0 * K, K), 1.0);
  EXPECT_DOUBLE_EQ(gain_distance(Matrix::Zero(2, 2), K), 1.0);
  EXPECT_TRUE(throws_kind([&] { gain_distance(K, Matrix::Zero(2, 2)); },
                          ErrorKind::ZeroReference));
}

TEST(Metrics, CumulativeCostClampsRange) {
  const std::vector<double> c = {1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(cumulative_cost(c, 0, 4), 10.0);
  EXPECT_EQ(cumulative_cost(c, 1, 3), 5.0);
  EXPECT_EQ(cumulative_cost(c, 2, 100), 7.0);
  EXPECT_EQ(cumulative_cost(c, 3, 1), 0.0);
}

TEST(Metrics, StageCostSeriesMatchesLog) {
  Scenario s = test::desk_scenario();
  s.horizon = 300;
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Nominal);
  const std::vector<double> series = stage_cost_series(sim.log, s.Qe, s.Re);
  ASSERT_EQ(series.size(), sim.log.steps.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    EXPECT_DOUBLE_EQ(series[k], sim.log.steps[k].stage_cost);
  }
  const std::vector<double> doubled = stage_cost_series(sim.log, 2.0 * s.Qe, 2.0 * s.Re);
  EXPECT_NEAR(cumulative_cost(doubled, 0, 300), 2.0 * cumulative_cost(series, 0, 300), 1e-12);
}

TEST(Metrics, LearnedControllerBeatsNominalAfterFirstUpdate) {
  const Scenario s = piecewise_scenario();
  const ScenarioModels models = build_models(s);
  const SimulationResult learned = simulate(s, models, ControllerMode::Learn);
  const SimulationResult nominal = simulate(s, models, ControllerMode::Nominal);
  const long from = learned.learning->first_update_step;
  ASSERT_GT(from, 0);
  const double a = cumulative_cost(stage_cost_series(learned.log, s.Qe, s.Re), from, s.horizon);
  const double b = cumulative_cost(stage_cost_series(nominal.log, s.Qe, s.Re), from, s.horizon);
  EXPECT_LT(a, b);
}

TEST(Metrics, MonotoneLearningLog) {
  const Scenario s = test::desk_scenario();
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Learn);
  const MonotonicityReport r = monotonicity_report(models, sim.log.iterations);
  EXPECT_GE(r.theta_decrease_min_eig, -1e-8);
  EXPECT_GE(r.value_decrease_min_eig, -1e-8);
  EXPECT_GE(r.theta_above_optimum_min_eig, -1e-8);
  EXPECT_LT(r.max_theta_error, 1e-6);
  EXPECT_LT(r.max_spectral_radius, 1.0);
}

TEST(Experiments, RunsAreDeterministic) {
  ExperimentPlan plan;
  plan.name = "variation";
  plan.base = test::desk_scenario();
  plan.variations = {-0.5, 0.5};
  plan.config_hash = "0123456789abcdef";
  const ExperimentReport a = run_experiment(plan);
  const ExperimentReport b = run_experiment(plan);
  EXPECT_EQ(a.summary.dump(), b.summary.dump());
  EXPECT_EQ(a.iterations_csv, b.iterations_csv);
  EXPECT_EQ(a.trajectories, b.trajectories);
  EXPECT_EQ(a.summary["cases"].size(), 2u);
  EXPECT_LE(a.summary["final_gain_distance"].get<double>(), 1e-4);
}

TEST(Experiments, UnknownNameIsRejected) {
  ExperimentPlan plan;
  plan.name = "bogus";
  plan.base = test::desk_scenario();
  EXPECT_FALSE(is_experiment("bogus"));
  EXPECT_TRUE(is_experiment("indirect-comparison"));
  EXPECT_TRUE(throws_kind([&] { run_experiment(plan); }, ErrorKind::ValidationFailed));
}

TEST(Output, TrajectoryCsvLayout) {
  TrajectoryLog log;
  log.steps.push_back({0, vec({1.0, 2.0}), vec({0.5, 0.25}), vec({0.0, -1.0}),
                       vec({0.1, 0.2}), 0.125, 3});
  const std::string csv = trajectory_csv(log);
  EXPECT_EQ(csv,
            "k,T1,T2,P1,P2,e1,e2,du1,du2,stage_cost,gain_id\n"
            "0,1,2,0.5,0.25,0,-1,0.1,0.2,0.125,3\n");
}

TEST(Output, FormatNumberRoundTrips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) {
    const std::string s = format_number(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v) << s;
  }
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
}
