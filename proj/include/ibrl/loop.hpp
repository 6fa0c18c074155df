#pragma once

#include <functional>

#include "ibrl/policy_search.hpp"

namespace ibrl::search {

// A deployable controller: maps a raw history state to a raw action. The
// stream is only consulted by stochastic policies (trained policies act
// deterministically).
using PolicyFn = std::function<Vector(const Vector& history, Rng& rng)>;

// Trained policy wrapped for deployment; applies the architecture-level
// action remap when the context carries one and counts recovery events.
PolicyFn deploy_policy(const nets::Network& policy,
                       const rollout::RolloutContext& ctx,
                       int* recovery_counter = nullptr);

// Mean accumulated true cost over seeded evaluation episodes.
double evaluate_policy(const PolicyFn& policy, const envs::Environment& env,
                       int episodes, int horizon, std::uint64_t seed,
                       int window);

struct IterationReport {
  int iteration = 0;
  std::vector<double> virtual_cost;  // per policy, scaled to deployment length
  std::vector<double> true_cost;     // per policy deployed episode cost
  double eval_cost = 0.0;            // policy 1 under the evaluation protocol
  double diversity = 0.0;
  std::size_t batch_size = 0;        // after appending this iteration's data
  int epochs_run = 0;
  int safety_events = 0;             // range-recovery count during deployment
};

// Everything one experiment needs beyond the accumulated batch.
struct RunnerConfig {
  envs::Environment env = envs::Environment::grid2d();
  int window = 15;
  safety::SafetySpec safety = safety::SoftConstraint{};
  diversity::DiversityConfig diversity;
  rollout::RolloutPlan plan;
  TrainConfig train;
  nets::FitConfig model_fit;
  std::vector<int> policy_hidden{50, 50};
  std::vector<int> model_hidden{50, 50};
  rollout::TransitionOutput transition_output =
      rollout::TransitionOutput::kDelta;
  int policies = 10;
  int deploy_steps = 200;
  int eval_episodes = 5;
  std::uint64_t seed = 0;
};

rollout::RolloutContext make_context(const RunnerConfig& cfg);

// Refits models on the accumulated batch, trains a fresh ensemble, deploys
// every member for `deploy_steps` true-environment steps, appends the new
// transitions and reports. Models/ensemble are refit from scratch each
// iteration so runs stay comparable.
IterationReport run_iteration(envs::Batch& batch, const RunnerConfig& cfg,
                              int iteration,
                              PolicyEnsemble* trained = nullptr,
                              ModelSet* fitted = nullptr);

// Supervised model fitting on the accumulated batch (transition, reward and
// behavior policy, all in the normalized encoding).
ModelSet fit_models(const envs::Batch& batch, const RunnerConfig& cfg,
                    int iteration);

}  // namespace ibrl::search
