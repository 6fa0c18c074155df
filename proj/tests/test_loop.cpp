#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ibrl/loop.hpp"

using namespace ibrl;
using search::IterationReport;
using search::RunnerConfig;

namespace {

// Small-but-real surrogate setup for loop mechanics.
RunnerConfig tiny_ib_runner(std::uint64_t seed) {
  RunnerConfig cfg;
  envs::IbConfig ib;
  cfg.env = envs::Environment::ib_surrogate(ib);
  cfg.window = 2;
  cfg.policies = 3;
  cfg.policy_hidden = {8};
  cfg.model_hidden = {8};
  cfg.deploy_steps = 40;
  cfg.eval_episodes = 2;
  cfg.plan.horizon = 6;
  cfg.plan.gamma = 1.0;
  cfg.train.max_epochs = 8;
  cfg.train.minibatch_starts = 6;
  cfg.train.holdout_starts = 6;
  cfg.model_fit.epochs = 10;
  cfg.model_fit.minibatch = 64;
  cfg.seed = seed;
  cfg.safety = safety::SoftConstraint{1.0, 0.5};
  cfg.diversity.alpha_d = 0.1;
  return cfg;
}

envs::Batch tiny_batch(const RunnerConfig& cfg, std::uint64_t seed) {
  return envs::collect_batch(cfg.env, envs::CollectPolicy::kRandom, 3, 40,
                             seed, cfg.window,
                             std::make_pair(30.0, 70.0));
}

bool reports_equal(const IterationReport& a, const IterationReport& b) {
  return a.iteration == b.iteration && a.virtual_cost == b.virtual_cost &&
         a.true_cost == b.true_cost && a.eval_cost == b.eval_cost &&
         a.diversity == b.diversity && a.batch_size == b.batch_size &&
         a.epochs_run == b.epochs_run && a.safety_events == b.safety_events;
}

}  // namespace

TEST_CASE("run_iteration appends exactly K * deploy_steps transitions") {
  RunnerConfig cfg = tiny_ib_runner(3);
  envs::Batch batch = tiny_batch(cfg, 17);
  const std::size_t before = batch.size();
  IterationReport report = search::run_iteration(batch, cfg, 1);
  CHECK(batch.size() == before + 3 * 40);
  CHECK(report.batch_size == batch.size());
  CHECK(report.true_cost.size() == 3);
  CHECK(report.virtual_cost.size() == 3);
  for (double c : report.true_cost) CHECK(std::isfinite(c));
  CHECK(std::isfinite(report.eval_cost));
}

TEST_CASE("earlier transitions are never mutated by an iteration") {
  RunnerConfig cfg = tiny_ib_runner(4);
  envs::Batch batch = tiny_batch(cfg, 18);
  const envs::Batch before = batch;
  search::run_iteration(batch, cfg, 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(batch.transitions[i].state == before.transitions[i].state);
    CHECK(batch.transitions[i].action == before.transitions[i].action);
    CHECK(batch.transitions[i].reward == before.transitions[i].reward);
  }
  // Appended transitions carry the iteration and policy provenance.
  for (std::size_t i = before.size(); i < batch.size(); ++i) {
    CHECK(batch.transitions[i].iteration == 1);
    CHECK(batch.transitions[i].policy >= 0);
    CHECK(batch.transitions[i].policy < 3);
  }
}

TEST_CASE("run_iteration is deterministic end to end") {
  RunnerConfig cfg = tiny_ib_runner(5);
  envs::Batch a = tiny_batch(cfg, 19);
  envs::Batch b = tiny_batch(cfg, 19);
  IterationReport ra = search::run_iteration(a, cfg, 1);
  IterationReport rb = search::run_iteration(b, cfg, 1);
  CHECK(reports_equal(ra, rb));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.transitions[i].state == b.transitions[i].state);
}

TEST_CASE("constrained deployments never leave the bound") {
  RunnerConfig cfg = tiny_ib_runner(6);
  safety::ConstrainedPolicy constrained;
  constrained.state_lo = 30.0;
  constrained.state_hi = 70.0;
  constrained.action_lo = cfg.env.spec().action_lo;
  constrained.action_hi = cfg.env.spec().action_hi;
  constrained.effect = cfg.env.spec().effect;
  cfg.safety = constrained;
  // Start inside the bound so the guarantee applies from the first step.
  envs::IbConfig ib;
  ib.start_lo = 30.0;
  ib.start_hi = 70.0;
  cfg.env = envs::Environment::ib_surrogate(ib);

  envs::Batch batch = tiny_batch(cfg, 20);
  const std::size_t before = batch.size();
  IterationReport report = search::run_iteration(batch, cfg, 1);
  CHECK(report.safety_events == 0);
  for (std::size_t i = before; i < batch.size(); ++i)
    for (int d = 1; d <= 3; ++d) {
      CHECK(batch.transitions[i].next_obs[d] >= 30.0);
      CHECK(batch.transitions[i].next_obs[d] <= 70.0);
    }
}

TEST_CASE("evaluate_policy: determinism and precondition") {
  RunnerConfig cfg = tiny_ib_runner(7);
  rollout::RolloutContext ctx = search::make_context(cfg);
  nets::Network policy =
      search::make_ensemble(1, {8}, ctx, 23).members[0];
  search::PolicyFn fn = search::deploy_policy(policy, ctx, nullptr);
  const double a = search::evaluate_policy(fn, cfg.env, 3, 25, 91, ctx.window);
  const double b = search::evaluate_policy(fn, cfg.env, 3, 25, 91, ctx.window);
  CHECK(a == b);
  CHECK_THROWS_AS(search::evaluate_policy(fn, cfg.env, 3, 0, 91, ctx.window),
                  ContractError);
  CHECK_THROWS_AS(search::evaluate_policy(fn, cfg.env, 0, 25, 91, ctx.window),
                  ContractError);
}

TEST_CASE("medium-policy evaluation matches an independent simulation") {
  envs::IbConfig ib;
  envs::Environment env = envs::Environment::ib_surrogate(ib);
  search::PolicyFn medium = [&](const Vector& history, Rng& rng) {
    // Newest observation sits at the tail of the history window.
    Vector obs = history.tail(6);
    return Vector(envs::medium_policy_action(obs, rng, ib));
  };
  const int episodes = 40;
  const int horizon = 200;
  const double eval =
      search::evaluate_policy(medium, env, episodes, horizon, 1234, 3);

  // Independent straight-line simulation, separate seeds and code path.
  double oracle = 0.0;
  Rng rng = make_rng(777);
  std::uniform_real_distribution<double> start(ib.start_lo, ib.start_hi);
  for (int ep = 0; ep < episodes; ++ep) {
    Vector obs = envs::ib_make_obs(start(rng), start(rng), start(rng), ib);
    for (int t = 0; t < horizon; ++t) {
      const Eigen::Vector3d a = envs::medium_policy_action(obs, rng, ib);
      envs::IbStep step = envs::ib_surrogate_step(obs, a, rng, ib);
      oracle += step.cost;
      obs = step.obs;
    }
  }
  oracle /= episodes;
  CHECK(std::abs(eval - oracle) / oracle < 0.05);
}

TEST_CASE("fit_models learns the surrogate reward shape at desk scale") {
  RunnerConfig cfg = tiny_ib_runner(8);
  cfg.model_fit.epochs = 60;
  cfg.model_hidden = {16};
  envs::Batch batch = envs::collect_batch(cfg.env, envs::CollectPolicy::kRandom,
                                          5, 100, 33, cfg.window,
                                          std::make_pair(30.0, 70.0));
  search::ModelSet models = search::fit_models(batch, cfg, 1);

  // The reward model should rank a clearly bad state below a good one.
  const envs::EnvSpec& spec = cfg.env.spec();
  auto reward_at = [&](double v, double g, double h) {
    Vector obs = envs::ib_make_obs(v, g, h, cfg.env.ib());
    std::vector<Vector> seq{obs};
    Vector state = envs::history_state(seq, 0, cfg.window);
    Vector in(state.size() + 3);
    in << spec.normalize_history(state),
        spec.normalize_action(Vector::Zero(3));
    return nets::mlp_forward(models.reward, in)[0];
  };
  CHECK(reward_at(40.0, 60.0, 50.0) > reward_at(66.0, 34.0, 66.0));
}
