#include "ibrl/loop.hpp"

#include <algorithm>

namespace ibrl::search {

namespace {

// Seed stream tags per iteration; keeps every consumer independent.
enum SeedTag : std::uint64_t {
  kTransitionFit = 1,
  kRewardFit = 2,
  kBehaviorFit = 3,
  kEnsembleInit = 4,
  kPolicyTrain = 5,
  kDeploy = 6,
  kEval = 7,
};

std::uint64_t tag_of(std::uint64_t seed, int iteration, SeedTag tag,
                     int member = 0) {
  return mix_seed(seed, 1000ull * (iteration + 1) + 100ull * tag + member);
}

struct EpisodeResult {
  double total_cost = 0.0;
  int steps = 0;
};

EpisodeResult run_episode(const envs::Environment& env, const PolicyFn& policy,
                          int horizon, int window, Rng& rng,
                          envs::Batch* sink, int episode_id, int iteration,
                          int policy_id) {
  Vector obs = env.reset(rng);
  std::vector<Vector> observed{obs};
  EpisodeResult result;
  for (int t = 0; t < horizon; ++t) {
    const Vector state = envs::history_state(observed, t, window);
    const Vector action = policy(state, rng);
    envs::Environment::Step step = env.step(obs, action, rng);
    result.total_cost -= step.reward;
    ++result.steps;
    if (sink != nullptr) {
      envs::Transition tr;
      tr.state = state;
      tr.action = action;
      tr.reward = step.reward;
      tr.next_obs = step.next_obs;
      tr.episode = episode_id;
      tr.t = t;
      tr.iteration = iteration;
      tr.policy = policy_id;
      sink->transitions.push_back(std::move(tr));
    }
    obs = step.next_obs;
    observed.push_back(obs);
  }
  return result;
}

}  // namespace

PolicyFn deploy_policy(const nets::Network& policy,
                       const rollout::RolloutContext& ctx,
                       int* recovery_counter) {
  const nets::Network net = policy;  // own a copy; cheap and immutable
  const rollout::RolloutContext context = ctx;
  const safety::ConstrainedPolicy* constrained = context.constrained;
  return [net, context, constrained, recovery_counter](const Vector& history,
                                                       Rng&) {
    Vector normalized = context.spec.normalize_history(history);
    Vector raw = nets::mlp_forward(net, normalized);
    if (constrained == nullptr) return raw;
    Vector values(context.spec.constrained_dims.size());
    const Eigen::Index base =
        static_cast<Eigen::Index>(context.window - 1) * context.spec.obs_dim;
    for (std::size_t i = 0; i < context.spec.constrained_dims.size(); ++i)
      values[i] = history[base + context.spec.constrained_dims[i]];
    safety::ConstrainedAction out =
        safety::constrain_action(raw, values, *constrained);
    if (recovery_counter != nullptr) *recovery_counter += out.recovery_dims;
    return out.action;
  };
}

double evaluate_policy(const PolicyFn& policy, const envs::Environment& env,
                       int episodes, int horizon, std::uint64_t seed,
                       int window) {
  require(episodes >= 1, "evaluate_policy: episodes must be >= 1");
  require(horizon >= 1, "evaluate_policy: horizon must be >= 1");
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(ep));
    total += run_episode(env, policy, horizon, window, rng, nullptr, ep, 0, 0)
                 .total_cost;
  }
  return total / episodes;
}

rollout::RolloutContext make_context(const RunnerConfig& cfg) {
  rollout::RolloutContext ctx;
  ctx.spec = cfg.env.spec();
  ctx.window = cfg.window;
  ctx.transition_output = cfg.transition_output;
  ctx.constrained = std::get_if<safety::ConstrainedPolicy>(&cfg.safety);
  return ctx;
}

ModelSet fit_models(const envs::Batch& batch, const RunnerConfig& cfg,
                    int iteration) {
  require(!batch.transitions.empty(), "fit_models: empty batch");
  const envs::EnvSpec& spec = cfg.env.spec();
  const int n = static_cast<int>(batch.transitions.size());
  const int state_dim = cfg.window * spec.obs_dim;
  require(batch.transitions.front().state.size() == state_dim,
          "fit_models: batch window does not match the configured window");

  Matrix trans_in(state_dim + spec.action_dim, n);
  Matrix trans_out(spec.obs_dim, n);
  Matrix reward_out(1, n);
  Matrix behav_out(spec.action_dim, n);
  for (int i = 0; i < n; ++i) {
    const envs::Transition& tr = batch.transitions[i];
    trans_in.col(i).head(state_dim) = spec.normalize_history(tr.state);
    trans_in.col(i).tail(spec.action_dim) = spec.normalize_action(tr.action);
    trans_out.col(i) = spec.normalize_obs(tr.next_obs);
    if (cfg.transition_output == rollout::TransitionOutput::kDelta)
      trans_out.col(i) -=
          trans_in.col(i).segment(state_dim - spec.obs_dim, spec.obs_dim);
    reward_out(0, i) = tr.reward;
    behav_out.col(i) = tr.action;
  }
  const Matrix behav_in = trans_in.topRows(state_dim);

  auto sizes = [&](int in, int out) {
    std::vector<int> s;
    s.push_back(in);
    s.insert(s.end(), cfg.model_hidden.begin(), cfg.model_hidden.end());
    s.push_back(out);
    return s;
  };

  ModelSet models;
  nets::FitConfig fit = cfg.model_fit;

  models.transition =
      nets::mlp_init(sizes(state_dim + spec.action_dim, spec.obs_dim),
                     nets::Head::kLinear,
                     tag_of(cfg.seed, iteration, kTransitionFit));
  fit.seed = tag_of(cfg.seed, iteration, kTransitionFit, 1);
  nets::fit_regression(models.transition, trans_in, trans_out, fit);

  models.reward = nets::mlp_init(sizes(state_dim + spec.action_dim, 1),
                                 nets::Head::kLinear,
                                 tag_of(cfg.seed, iteration, kRewardFit));
  fit.seed = tag_of(cfg.seed, iteration, kRewardFit, 1);
  nets::fit_regression(models.reward, trans_in, reward_out, fit);

  // The constrained-policy variant does not consult the behavior policy, but
  // fitting it is cheap and keeps reports uniform.
  models.behavior = nets::mlp_init(sizes(state_dim, spec.action_dim),
                                   nets::Head::kGaussian,
                                   tag_of(cfg.seed, iteration, kBehaviorFit));
  fit.seed = tag_of(cfg.seed, iteration, kBehaviorFit, 1);
  nets::fit_behavior_policy(*models.behavior, behav_in, behav_out, fit);
  return models;
}

IterationReport run_iteration(envs::Batch& batch, const RunnerConfig& cfg,
                              int iteration, PolicyEnsemble* trained,
                              ModelSet* fitted) {
  require(!batch.transitions.empty(), "run_iteration: empty batch");
  safety::validate(cfg.safety);

  const rollout::RolloutContext ctx = make_context(cfg);
  ModelSet models = fit_models(batch, cfg, iteration);

  PolicyEnsemble ensemble =
      make_ensemble(cfg.policies, cfg.policy_hidden, ctx,
                    tag_of(cfg.seed, iteration, kEnsembleInit));
  rollout::RolloutPlan plan = cfg.plan;
  plan.policy_count = cfg.policies;
  plan.start_states = cfg.train.minibatch_starts;

  TrainConfig train = cfg.train;
  train.seed = tag_of(cfg.seed, iteration, kPolicyTrain);
  TrainLog log = train_policies(batch, models, ensemble, ctx, cfg.safety,
                                cfg.diversity, plan, train);

  IterationReport report;
  report.iteration = iteration;
  report.epochs_run = log.epochs_run;
  report.diversity = log.final_diversity;
  // Scale the H-step virtual return to the deployment episode length so
  // virtual and true costs share units.
  const double steps_per_rollout = std::max(1, plan.horizon - 1);
  for (double ret : log.virtual_mean_return)
    report.virtual_cost.push_back(-ret / steps_per_rollout *
                                  cfg.deploy_steps);

  int next_episode = 0;
  for (const envs::Transition& tr : batch.transitions)
    next_episode = std::max(next_episode, tr.episode + 1);

  for (int k = 0; k < ensemble.size(); ++k) {
    int recoveries = 0;
    PolicyFn policy = deploy_policy(ensemble.members[k], ctx, &recoveries);
    Rng rng = make_rng(tag_of(cfg.seed, iteration, kDeploy, k));
    EpisodeResult result =
        run_episode(cfg.env, policy, cfg.deploy_steps, cfg.window, rng,
                    &batch, next_episode + k, iteration, k);
    report.true_cost.push_back(result.total_cost);
    report.safety_events += recoveries;
  }

  // Evaluation keeps one fixed protocol (seed and start states) across
  // iterations so reported costs compare policies, not start draws.
  report.eval_cost = evaluate_policy(
      deploy_policy(ensemble.members[0], ctx, nullptr), cfg.env,
      cfg.eval_episodes, cfg.deploy_steps, tag_of(cfg.seed, 0, kEval),
      cfg.window);
  report.batch_size = batch.size();

  if (trained != nullptr) *trained = std::move(ensemble);
  if (fitted != nullptr) *fitted = std::move(models);
  return report;
}

}  // namespace ibrl::search
