#pragma once

#include <optional>
#include <vector>

#include "ibrl/diversity.hpp"
#include "ibrl/fit.hpp"
#include "ibrl/rollout.hpp"

namespace ibrl::search {

// K jointly trained policies; member 0 is the designated evaluation policy,
// the rest also feed the diversity pool and data collection.
struct PolicyEnsemble {
  std::vector<nets::Network> members;

  int size() const { return static_cast<int>(members.size()); }
};

PolicyEnsemble make_ensemble(int count, const std::vector<int>& hidden,
                             const rollout::RolloutContext& ctx,
                             std::uint64_t seed);

// Transition/reward models plus the behavior policy fitted on the batch.
struct ModelSet {
  nets::Network transition;
  nets::Network reward;
  std::optional<nets::Network> behavior;
};

struct LossBreakdown {
  ad::Var total;
  double reward_term = 0.0;     // value of the reward (or objective) part
  double safety_term = 0.0;     // value of the soft-constraint part
  double diversity_value = 0.0; // measure value before the alpha_d weight
};

// Combined training loss over trajectories grouped per policy
// (by_policy[k][n], all policies sharing start state n):
//  - SoftConstraint: reward loss + soft-constraint term - alpha_d * measure
//  - ConstrainedPolicy: reward loss - alpha_d * measure
//  - Objective: deviation-vs-reward objective - alpha_d * measure
// The diversity pool drops policy 0 when configured; a pool smaller than two
// contributes zero. Per-group measures are averaged over start states.
LossBreakdown combined_loss(
    ad::Tape& tape,
    const std::vector<std::vector<rollout::Trajectory>>& by_policy,
    const nets::BoundNet* behavior, const safety::SafetySpec& safety_spec,
    const diversity::DiversityConfig& div, const rollout::RolloutPlan& plan);

struct TrainConfig {
  int max_epochs = 500;
  int patience = 20;
  int minibatch_starts = 32;
  int holdout_starts = 32;
  double lr = 1e-3;
  double min_delta = 1e-7;
  std::uint64_t seed = 0;
};

struct TrainLog {
  int epochs_run = 0;
  bool early_stopped = false;
  std::vector<double> holdout_losses;
  double final_diversity = 0.0;           // measure on final holdout rollouts
  std::vector<double> virtual_mean_return;  // per policy, holdout average
};

// Joint minibatch optimization of all ensemble members on the combined loss,
// with start states drawn from the batch and early stopping on a fixed
// held-out start-state set. Deterministic given the seed.
TrainLog train_policies(const envs::Batch& batch, const ModelSet& models,
                        PolicyEnsemble& ensemble,
                        const rollout::RolloutContext& ctx,
                        const safety::SafetySpec& safety_spec,
                        const diversity::DiversityConfig& div,
                        const rollout::RolloutPlan& plan,
                        const TrainConfig& cfg);

}  // namespace ibrl::search
