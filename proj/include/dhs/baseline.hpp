#pragma once

#include "dhs/augment.hpp"
#include "dhs/learner.hpp"

namespace dhs {

struct OptimalRegulator {
  Matrix K;
  Matrix P;
  QMatrix Theta;
};

/// Model-based optimum: Riccati solution and its Q-function matrix.
OptimalRegulator optimal_regulator(const AugmentedSystem& aug);

struct IdentifiedModel {
  Matrix A;
  Matrix B;
};

/// Least-squares [A B] = E+ [E; U]^+ from the applied inputs in a batch.
IdentifiedModel identify_model(const DataBatch& batch);

/// Identify-then-solve: LQR on the identified model with the true costs.
Matrix indirect_controller(const DataBatch& batch, const AugmentedSystem& costs);

}  // namespace dhs
