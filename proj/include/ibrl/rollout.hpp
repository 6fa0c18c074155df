#pragma once

#include <vector>

#include "ibrl/envs.hpp"
#include "ibrl/network.hpp"
#include "ibrl/safety.hpp"
#include "ibrl/tape.hpp"

namespace ibrl::rollout {

struct RolloutPlan {
  int horizon = 100;     // H: number of states in a trajectory
  double gamma = 1.0;
  int start_states = 1;  // N
  int policy_count = 1;  // K
};

// One virtual rollout through the learned models. States are history vectors
// in normalized units; actions stay in raw action units. A horizon-H
// trajectory holds H states and H-1 actions/rewards.
struct Trajectory {
  std::vector<ad::Var> states;
  std::vector<ad::Var> actions;
  std::vector<ad::Var> rewards;
  int policy_index = 0;
};

enum class TransitionOutput {
  kAbsolute,  // model emits the next observation directly
  kDelta,     // model emits the observation change; keeps small action
              // effects visible to the regression at desk scale
};

// Env encoding shared by every rollout: dimensions, normalization, window
// and (for architecture-level safety) the constrained-dimension map.
struct RolloutContext {
  envs::EnvSpec spec;
  int window = 1;
  TransitionOutput transition_output = TransitionOutput::kAbsolute;
  const safety::ConstrainedPolicy* constrained = nullptr;
};

struct BoundModels {
  nets::BoundNet transition;
  nets::BoundNet reward;
  const RolloutContext* ctx = nullptr;
};

// Unrolls policy/transition/reward for `plan.horizon` states starting from a
// raw history state. Under a constrained context the policy output is
// remapped per step and the constrained observation dimensions advance by
// the known linear rule instead of the model prediction, which keeps them
// inside the safety bound over the whole rollout.
Trajectory virtual_rollout(ad::Tape& tape, const BoundModels& models,
                           const nets::BoundNet& policy, int policy_index,
                           const Vector& start_history_raw,
                           const RolloutPlan& plan);

// sum_{t=1..H-1} gamma^t e_t; the first reward carries gamma^1.
ad::Var discounted_return_t(ad::Tape& tape, const Trajectory& traj,
                            double gamma);
double discounted_return(const std::vector<double>& rewards, double gamma);

// -(1/(N K H)) sum_k sum_n sum_t gamma^t e_t over all trajectories.
ad::Var reward_loss_t(ad::Tape& tape, const std::vector<Trajectory>& trajs,
                      const RolloutPlan& plan);

}  // namespace ibrl::rollout
