#include "dhs/baseline.hpp"

#include "dhs/error.hpp"

namespace dhs {

OptimalRegulator optimal_regulator(const AugmentedSystem& aug) {
  LqrSolution lqr = solve_lqr(aug.A, aug.B, aug.Q, aug.N, aug.R);
  QMatrix theta = model_theta(aug, lqr.P);
  return OptimalRegulator{std::move(lqr.K), std::move(lqr.P), std::move(theta)};
}

IdentifiedModel identify_model(const DataBatch& batch) {
  check_pe(batch);
  const long n = batch.n();
  const Matrix AB = batch.Zeta.topRows(n) * pseudoinverse(batch.Z);
  return IdentifiedModel{AB.leftCols(n), AB.rightCols(batch.m())};
}

Matrix indirect_controller(const DataBatch& batch, const AugmentedSystem& costs) {
  const IdentifiedModel model = identify_model(batch);
  return solve_lqr(model.A, model.B, costs.Q, costs.N, costs.R).K;
}

}  // namespace dhs
