#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dhs/baseline.hpp"
#include "dhs/learner.hpp"
#include "test_support.hpp"

using namespace dhs;
using dhs::test::rows;
using dhs::test::throws_kind;
using dhs::test::vec;

namespace {

// eps+ = A eps + B du, nothing else: the exact setting of the estimator.
class LinearEnvironment final : public Environment {
 public:
  LinearEnvironment(Matrix A, Matrix B, Vector x0, long horizon)
      : A_(std::move(A)), B_(std::move(B)), x_(std::move(x0)), horizon_(horizon) {}
  Vector state() const override { return x_; }
  void apply(const Vector& du) override {
    x_ = A_ * x_ + B_ * du;
    ++k_;
  }
  long step_index() const override { return k_; }
  long remaining() const override { return horizon_ - k_; }

 private:
  Matrix A_, B_;
  Vector x_;
  long horizon_;
  long k_ = 0;
};

ProbingNoiseConfig desk_noise(std::uint64_t seed = 1) {
  ProbingNoiseConfig c;
  c.amplitude = 0.05;
  c.decay = 1.0;
  c.seed = seed;
  return c;
}

// A random gain near K* that still stabilizes the plant.
Matrix random_stabilizing_gain(const AugmentedSystem& aug, const Matrix& Kstar,
                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (;;) {
    const Matrix K =
        Kstar + 0.3 * Matrix::NullaryExpr(Kstar.rows(), Kstar.cols(), [&] { return normal(rng); });
    if (spectral_radius(aug.closed_loop(K)) < 0.97) return K;
  }
}

}  // namespace

TEST(QMatrixTest, BlocksAndSymmetry) {
  Matrix theta = rows({{4.0, 1.0, 2.0}, {1.0, 3.0, 0.5}, {2.2, 0.5, 5.0}});
  const QMatrix q(theta, 2, 1);
  EXPECT_TRUE(q.full().isApprox(q.full().transpose()));
  EXPECT_DOUBLE_EQ(q.ue()(0, 0), 2.1);
  EXPECT_DOUBLE_EQ(q.uu()(0, 0), 5.0);
  EXPECT_EQ(q.ee().rows(), 2);
  EXPECT_TRUE(throws_kind([] { QMatrix(Matrix::Identity(3, 3), 1, 1); },
                          ErrorKind::DimensionMismatch));
}

TEST(ProbingNoiseTest, ZeroAmplitude) {
  ProbingNoiseConfig c = desk_noise();
  c.amplitude = 0.0;
  const ProbingNoise noise(c, 3);
  for (long k : {0L, 5L, 100L}) EXPECT_EQ(noise(k), Vector::Zero(3));
}

TEST(ProbingNoiseTest, SingleSinusoidEvaluation) {
  ProbingNoiseConfig c;
  c.sinusoids_per_channel = 1;
  c.omega_min = std::numbers::pi / 4;
  c.omega_max = 3.0;
  c.amplitude = 1.0;
  c.decay = 1.0;
  c.seed = 42;
  const ProbingNoise noise(c, 1);
  EXPECT_DOUBLE_EQ(noise.frequencies()[0][0], std::numbers::pi / 4);
  // sin(phi) and sin(pi/2 + phi) = cos(phi)
  const double s0 = noise(0)(0);
  const double s2 = noise(2)(0);
  EXPECT_NEAR(s0 * s0 + s2 * s2, 1.0, 1e-14);
}

TEST(ProbingNoiseTest, EnvelopeDecaysToFloor) {
  ProbingNoiseConfig c = desk_noise();
  c.sinusoids_per_channel = 1;
  c.decay = 0.5;
  c.floor = 0.25;
  c.amplitude = 1.0;
  const ProbingNoise noise(c, 1);
  ProbingNoiseConfig flat = c;
  flat.decay = 1.0;
  flat.floor = 0.0;
  const ProbingNoise reference(flat, 1);
  EXPECT_NEAR(noise(1)(0), 0.5 * reference(1)(0), 1e-15);
  EXPECT_NEAR(noise(2)(0), 0.25 * reference(2)(0), 1e-15);
  EXPECT_NEAR(noise(7)(0), 0.25 * reference(7)(0), 1e-15);
}

TEST(ProbingNoiseTest, DistinctFrequenciesAndSeededPhases) {
  const ProbingNoise a(desk_noise(1), 3), b(desk_noise(1), 3), c(desk_noise(2), 3);
  std::vector<double> all;
  for (const auto& ch : a.frequencies()) all.insert(all.end(), ch.begin(), ch.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  EXPECT_EQ(a(17), b(17));
  EXPECT_NE(a(17), c(17));
}

TEST(ProbingNoiseTest, PersistentlyExcitingOfOrderNPlusOne) {
  const long n = 6, m = 3;
  const ProbingNoise noise(desk_noise(), m);
  Matrix u(m, 200);
  for (long k = 0; k < u.cols(); ++k) u.col(k) = noise(k);
  EXPECT_EQ(numeric_rank(hankel(u, n + 1)), m * (n + 1));
}

TEST(ProbingNoiseTest, Validation) {
  ProbingNoiseConfig c = desk_noise();
  EXPECT_NO_THROW(validate_noise(c, 6));
  c.sinusoids_per_channel = 3;
  EXPECT_TRUE(throws_kind([&] { validate_noise(c, 6); }, ErrorKind::ValidationFailed));
  c = desk_noise();
  c.omega_max = 3.5;
  EXPECT_TRUE(throws_kind([&] { validate_noise(c, 6); }, ErrorKind::ValidationFailed));
  c = desk_noise();
  c.decay = 1.5;
  EXPECT_TRUE(throws_kind([&] { validate_noise(c, 6); }, ErrorKind::ValidationFailed));
}

TEST(RequiredSamples, Formula) {
  EXPECT_EQ(required_samples(22, 11), 275);
  EXPECT_EQ(required_samples(2, 1), 5);
  EXPECT_EQ(required_samples(6, 3), 27);
}

TEST(PersistentExcitation, ZeroDataIsRankDeficient) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 100);
  ProbingNoiseConfig c = desk_noise();
  c.amplitude = 0.0;
  const DataBatch batch = collect_batch(env, test::desk_kstar(), ProbingNoise(c, 3), 27);
  EXPECT_EQ(pe_report(batch).rank, 0);
  try {
    check_pe(batch);
    FAIL() << "accepted a zero batch";
  } catch (const RankDeficientError& e) {
    EXPECT_EQ(e.observed_rank(), 0);
    EXPECT_EQ(e.required_rank(), 9);
  }
}

TEST(PersistentExcitation, ExcitedBatchHasFullRank) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 100);
  DataBatch batch = collect_batch(env, test::desk_kstar(), ProbingNoise(desk_noise(), 3), 27);
  EXPECT_EQ(check_pe(batch).rank, 9);
  // Duplicated columns add nothing.
  DataBatch doubled = batch;
  doubled.append(batch);
  EXPECT_EQ(pe_report(doubled).rank, 9);
}

TEST(PersistentExcitation, HorizonExhausted) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 10);
  EXPECT_TRUE(throws_kind(
      [&] { collect_batch(env, test::desk_kstar(), ProbingNoise(desk_noise(), 3), 27); },
      ErrorKind::HorizonExhausted));
}

class EstimateTheta : public ::testing::TestWithParam<EstimationMethod> {};

TEST_P(EstimateTheta, MatchesModelForStabilizingGains) {
  const AugmentedSystem aug = test::desk_augmented(0.2);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix K = random_stabilizing_gain(aug, test::desk_kstar(), rng);
    LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 1000);
    const long samples = GetParam() == EstimationMethod::Matrix ? 27 : 60;
    const DataBatch batch =
        collect_batch(env, K, ProbingNoise(desk_noise(trial + 1), 3), samples);
    const QMatrix theta = estimate_theta(batch, aug.Qbar, GetParam());
    const QMatrix model = model_theta(aug, aug.value_matrix(K));
    EXPECT_LT(test::rel_error(theta.full(), model.full()), 1e-8);
    EXPECT_GT(min_eigenvalue(theta.full()), 0.0);
    EXPECT_GT(min_eigenvalue(Matrix(theta.uu())), 0.0);
  }
}

TEST_P(EstimateTheta, OptimalGainIsAFixedPoint) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 1000);
  const DataBatch batch =
      collect_batch(env, test::desk_kstar(), ProbingNoise(desk_noise(), 3), 60);
  const QMatrix theta = estimate_theta(batch, aug.Qbar, GetParam());
  EXPECT_LT(test::rel_error(improve_policy(theta), test::desk_kstar()), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Methods, EstimateTheta,
                         ::testing::Values(EstimationMethod::Matrix,
                                           EstimationMethod::ScalarLeastSquares),
                         [](const auto& info) {
                           return info.param == EstimationMethod::Matrix ? "Matrix"
                                                                         : "ScalarLs";
                         });

TEST(EstimateThetaErrors, ScalarMethodNeedsEnoughRows) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 1000);
  const DataBatch batch =
      collect_batch(env, test::desk_kstar(), ProbingNoise(desk_noise(), 3), 27);
  // 45 unknowns in the upper triangle of a 9x9 matrix, 27 equations.
  EXPECT_TRUE(throws_kind(
      [&] { estimate_theta(batch, aug.Qbar, EstimationMethod::ScalarLeastSquares); },
      ErrorKind::RankDeficient));
}

TEST(MethodNames, RoundTrip) {
  EXPECT_EQ(parse_method("matrix"), EstimationMethod::Matrix);
  EXPECT_EQ(parse_method("scalar-ls"), EstimationMethod::ScalarLeastSquares);
  EXPECT_EQ(to_string(EstimationMethod::ScalarLeastSquares), "scalar-ls");
  EXPECT_TRUE(throws_kind([] { parse_method("magic"); }, ErrorKind::ParseError));
}

TEST(ImprovePolicy, Examples) {
  EXPECT_LT(improve_policy(QMatrix(Matrix::Identity(9, 9), 6, 3)).norm(), 1e-15);
  // 1-D: K = theta_ue / theta_uu
  EXPECT_DOUBLE_EQ(improve_policy(QMatrix(rows({{3.0, 1.5}, {1.5, 6.0}}), 1, 1))(0, 0), 0.25);
  EXPECT_TRUE(throws_kind([] { improve_policy(QMatrix(rows({{1.0, 1.0}, {1.0, 0.0}}), 1, 1)); },
                          ErrorKind::SingularBlock));
  const AugmentedSystem aug = test::desk_augmented();
  const OptimalRegulator opt = optimal_regulator(aug);
  EXPECT_LT(test::rel_error(improve_policy(opt.Theta), test::desk_kstar()), 1e-10);
}

TEST(ImprovePolicy, RejectsDestabilizingGain) {
  // A greedy gain of the wrong sign for this scalar plant.
  EXPECT_TRUE(throws_kind(
      [] {
        improve_policy(QMatrix(rows({{1.0, -2.0}, {-2.0, 1.0}}), 1, 1), rows({{0.5}}),
                       rows({{1.0}}));
      },
      ErrorKind::DestabilizingUpdate));
}

TEST(InitialController, TrueModelGivesOptimalGainAndOneIteration) {
  const DhsPlant plant = discretize(test::desk_topology(), 1.0);
  const Matrix K0 = initial_controller(plant, test::desk_weights(), Matrix::Identity(3, 3),
                                       Matrix::Identity(3, 3));
  EXPECT_LT(test::rel_error(K0, test::desk_kstar()), 1e-10);

  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, test::vec({0.1, 0.0, -0.1, 0.2, 0.0, 0.1}), 1000);
  PolicyIterationOptions options;
  options.noise = desk_noise();
  const PolicyIterationResult result = run_policy_iteration(env, K0, aug.Qbar, options);
  EXPECT_TRUE(result.converged);
  EXPECT_EQ(result.log.size(), 1u);
}

TEST(InitialController, NominalGainStabilizesVariedPlants) {
  const DhsPlant plant = discretize(test::desk_topology(), 1.0);
  const Matrix K0 = initial_controller(plant, test::desk_weights(), Matrix::Identity(3, 3),
                                       Matrix::Identity(3, 3));
  for (double v : {-0.5, 0.5}) {
    EXPECT_LT(spectral_radius(test::desk_augmented(v).closed_loop(K0)), 1.0) << v;
  }
}

TEST(PolicyIteration, RefusesUnstableInitialGain) {
  const AugmentedSystem aug = test::desk_augmented();
  LinearEnvironment env(aug.A, aug.B, Vector::Zero(6), 1000);
  PolicyIterationOptions options;
  options.noise = desk_noise();
  options.model = std::make_pair(aug.A, aug.B);
  EXPECT_TRUE(throws_kind(
      [&] { run_policy_iteration(env, Matrix::Zero(3, 6), aug.Qbar, options); },
      ErrorKind::NotStabilizable));
}

TEST(PolicyIteration, ConvergesOnVariedPlantsWithMonotoneValues) {
  const DhsPlant nominal = discretize(test::desk_topology(), 1.0);
  const Matrix K0 = initial_controller(nominal, test::desk_weights(), Matrix::Identity(3, 3),
                                       Matrix::Identity(3, 3));
  for (double v : {-0.5, 0.5}) {
    const AugmentedSystem aug = test::desk_augmented(v);
    const Matrix Kstar = v < 0 ? test::desk_kstar_m50() : optimal_regulator(aug).K;
    LinearEnvironment env(aug.A, aug.B, test::vec({0.1, -0.2, 0.0, 0.3, 0.0, -0.1}), 2000);
    PolicyIterationOptions options;
    options.noise = desk_noise();
    options.oracle_gain = Kstar;
    options.model = std::make_pair(aug.A, aug.B);
    const PolicyIterationResult result = run_policy_iteration(env, K0, aug.Qbar, options);
    EXPECT_TRUE(result.converged);
    EXPECT_LE(result.log.size(), 10u);
    EXPECT_LE((result.K - Kstar).norm() / Kstar.norm(), 1e-4);
    EXPECT_LE(result.log.back().oracle_distance, 1e-4);
    for (const IterationRecord& r : result.log) {
      EXPECT_GE(min_eigenvalue(aug.value_matrix(r.K_used) - aug.value_matrix(r.K_next)), -1e-8);
      EXPECT_LT(r.spectral_radius, 1.0);
      EXPECT_EQ(r.pe_rank, 9);
    }
  }
}
