#include <gtest/gtest.h>

#include "dhs/baseline.hpp"
#include "dhs/harness.hpp"
#include "test_support.hpp"

using namespace dhs;
using dhs::test::rows;
using dhs::test::throws_kind;

namespace {

DataBatch linear_batch(const AugmentedSystem& aug, const Matrix& K, long samples) {
  struct Linear final : Environment {
    const AugmentedSystem& aug;
    Vector x;
    long k = 0;
    explicit Linear(const AugmentedSystem& a) : aug(a), x(Vector::Zero(a.n)) {}
    Vector state() const override { return x; }
    void apply(const Vector& du) override {
      x = aug.A * x + aug.B * du;
      ++k;
    }
    long step_index() const override { return k; }
    long remaining() const override { return 1000 - k; }
  } env(aug);
  ProbingNoiseConfig c;
  c.amplitude = 0.05;
  c.decay = 1.0;
  c.seed = 3;
  return collect_batch(env, K, ProbingNoise(c, aug.m), samples);
}

}  // namespace

TEST(OptimalRegulator, SatisfiesRiccatiFixedPoint) {
  const AugmentedSystem aug = test::desk_augmented(-0.5);
  const OptimalRegulator opt = optimal_regulator(aug);
  EXPECT_LT(test::rel_error(opt.K, test::desk_kstar_m50()), 1e-10);
  const Matrix Acl = aug.closed_loop(opt.K);
  EXPECT_LT((Acl.transpose() * opt.P * Acl + aug.effective_cost(opt.K) - opt.P).norm() /
                opt.P.norm(),
            1e-10);
  EXPECT_LT(test::rel_error(improve_policy(opt.Theta), opt.K), 1e-10);
  EXPECT_LT(spectral_radius(Acl), 1.0);
}

TEST(OptimalRegulator, ScalarThetaBlocks) {
  AugmentedSystem aug;
  aug.n = 1;
  aug.m = 1;
  aug.A = rows({{1.1}});
  aug.B = rows({{1.0}});
  aug.Q = rows({{1.0}});
  aug.N = rows({{0.0}});
  aug.R = rows({{1.0}});
  aug.Qbar = rows({{1.0, 0.0}, {0.0, 1.0}});
  const OptimalRegulator opt = optimal_regulator(aug);
  const double p = 1.7737707217414374;
  EXPECT_NEAR(opt.P(0, 0), p, 1e-12);
  EXPECT_NEAR(opt.Theta.uu()(0, 0), 1.0 + p, 1e-12);
  EXPECT_NEAR(opt.Theta.ue()(0, 0), 1.1 * p, 1e-12);
  EXPECT_NEAR(opt.Theta.ee()(0, 0), 1.0 + 1.21 * p, 1e-12);
}

TEST(IndirectBaseline, RecoversModelFromLinearData) {
  const AugmentedSystem aug = test::desk_augmented(0.2);
  const DataBatch batch = linear_batch(aug, test::desk_kstar(), 27);
  const IdentifiedModel model = identify_model(batch);
  EXPECT_LT(test::rel_error(model.A, aug.A), 1e-8);
  EXPECT_LT(test::rel_error(model.B, aug.B), 1e-8);
  EXPECT_LT(test::rel_error(indirect_controller(batch, aug), optimal_regulator(aug).K), 1e-8);
}

TEST(IndirectBaseline, RejectsUnexcitedData) {
  const AugmentedSystem aug = test::desk_augmented();
  DataBatch batch = linear_batch(aug, test::desk_kstar(), 27);
  batch.Z.setZero();
  EXPECT_TRUE(throws_kind([&] { identify_model(batch); }, ErrorKind::RankDeficient));
}

TEST(IndirectBaseline, NonlinearityHurtsIdentificationMoreThanLearning) {
  Scenario s = test::desk_scenario();
  s.variation = 0.2;
  s.nonlinearity = 1e-4;
  s.horizon = 2000;
  const ScenarioModels models = build_models(s);
  const SimulationResult sim = simulate(s, models, ControllerMode::Learn);
  ASSERT_TRUE(sim.learning.has_value());
  const double rl = gain_distance(sim.final_gain, models.optimum.K);
  const double id =
      gain_distance(indirect_controller(sim.learning->first_batch, models.true_aug),
                    models.optimum.K);
  EXPECT_GE(id, 10.0 * rl) << "rl " << rl << " id " << id;
}
