#pragma once

#include <cstdint>
#include <vector>

#include "ibrl/network.hpp"

namespace ibrl::nets {

struct FitConfig {
  int epochs = 200;
  int minibatch = 64;
  double lr = 1e-3;
  double val_split = 0.1;
  int patience = 20;
  std::uint64_t seed = 0;
};

struct FitReport {
  std::vector<double> epoch_losses;  // mean training loss per epoch run
  double final_loss = 0.0;
  int epochs_run = 0;
  bool early_stopped = false;
};

// Mean-squared-error regression with Adam and early stopping on a held-out
// validation split. Inputs/targets hold one sample per column.
FitReport fit_regression(Network& net, const Matrix& inputs,
                         const Matrix& targets, const FitConfig& cfg);

// Gaussian negative log-likelihood fit of actions given states for a
// gaussian-head network: the mean recovers the regression of actions on
// states, the diagonal sigma the per-dimension action spread.
FitReport fit_behavior_policy(Network& net, const Matrix& states,
                              const Matrix& actions, const FitConfig& cfg);

}  // namespace ibrl::nets
