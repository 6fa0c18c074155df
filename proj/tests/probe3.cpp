// Scratch: desk-scale iterative loop on the surrogate (constrained policy).
#include <cstdlib>
#include <iostream>

#include "ibrl/loop.hpp"

using namespace ibrl;

int main(int argc, char** argv) {
  auto arg = [&](const std::string& key, double fallback) {
    for (int i = 1; i + 1 < argc; ++i)
      if (argv[i] == "--" + key) return std::atof(argv[i + 1]);
    return fallback;
  };
  const int window = static_cast<int>(arg("window", 3));
  const int policies = static_cast<int>(arg("k", 5));
  const int horizon = static_cast<int>(arg("horizon", 40));
  const int epochs = static_cast<int>(arg("epochs", 250));
  const int iterations = static_cast<int>(arg("iters", 4));
  const std::uint64_t seed = static_cast<std::uint64_t>(arg("seed", 1));
  const double alpha_d = arg("alphad", 0.15);
  const int hidden = static_cast<int>(arg("hidden", 20));
  const bool soft = arg("soft", 0) > 0;
  const std::string variant = soft ? "soft_constraint" : "constrained_policy";

  envs::IbConfig ib;
  ib.start_lo = soft ? 0.0 : 30.0;
  ib.start_hi = soft ? 100.0 : 70.0;

  search::RunnerConfig cfg;
  cfg.env = envs::Environment::ib_surrogate(ib);
  cfg.window = window;
  cfg.policies = policies;
  cfg.policy_hidden = {hidden};
  cfg.model_hidden = {hidden, hidden};
  cfg.deploy_steps = 200;
  cfg.eval_episodes = static_cast<int>(arg("evaleps", 5));
  cfg.plan.horizon = horizon;
  cfg.plan.gamma = 1.0;
  cfg.train.max_epochs = epochs;
  cfg.train.patience = static_cast<int>(arg("patience", 60));
  cfg.train.minibatch_starts = static_cast<int>(arg("starts", 12));
  cfg.train.holdout_starts = static_cast<int>(arg("starts", 12));
  cfg.train.lr = arg("lr", 5e-3);
  cfg.model_fit.epochs = static_cast<int>(arg("fitepochs", 300));
  cfg.model_fit.minibatch = 32;
  cfg.model_fit.lr = 3e-3;
  cfg.model_fit.patience = static_cast<int>(arg("fitpatience", 60));
  cfg.seed = seed;
  if (arg("absolute", 0) > 0)
    cfg.transition_output = rollout::TransitionOutput::kAbsolute;
  cfg.diversity.alpha_d = alpha_d;
  if (variant == "constrained_policy") {
    safety::ConstrainedPolicy c;
    c.state_lo = 30.0;
    c.state_hi = 70.0;
    c.action_lo = cfg.env.spec().action_lo;
    c.action_hi = cfg.env.spec().action_hi;
    c.effect = cfg.env.spec().effect;
    cfg.safety = c;
  } else {
    cfg.safety = safety::SoftConstraint{20.0, 0.5};
  }

  const int episodes = static_cast<int>(arg("episodes", 5));
  envs::Batch batch =
      soft ? envs::collect_batch(cfg.env, envs::CollectPolicy::kBehavior,
                                 episodes, 200, mix_seed(seed, 1), window)
           : envs::collect_batch(cfg.env, envs::CollectPolicy::kRandom,
                                 episodes, 200, mix_seed(seed, 1), window,
                                 std::make_pair(30.0, 70.0));
  const double initial = batch.mean_episode_cost();
  std::cout << "initial mean episode cost " << initial << "\n";

  double prev = 1e18;
  int violations = 0;
  for (int it = 1; it <= iterations; ++it) {
    search::PolicyEnsemble trained;
    search::IterationReport r =
        search::run_iteration(batch, cfg, it, &trained);
    {  // policy-1 placement diagnostics on the eval protocol
      rollout::RolloutContext ctx = search::make_context(cfg);
      search::PolicyFn fn =
          search::deploy_policy(trained.members[0], ctx, nullptr);
      double first_half = 0.0, second_half = 0.0, end_dist = 0.0;
      const int eps = 10;
      for (int ep = 0; ep < eps; ++ep) {
        Rng rng = make_rng(777, ep);
        Vector obs = cfg.env.reset(rng);
        std::vector<Vector> seen{obs};
        for (int t = 0; t < 200; ++t) {
          Vector st = envs::history_state(seen, t, cfg.window);
          Vector a = fn(st, rng);
          auto step = cfg.env.step(obs, a, rng);
          (t < 100 ? first_half : second_half) += -step.reward;
          obs = step.next_obs;
          seen.push_back(obs);
        }
        end_dist += (Eigen::Vector3d(obs[1], obs[2], obs[3]) -
                     Eigen::Vector3d(40.0, 60.0, 50.0))
                        .norm();
      }
      std::cout << "   [diag] first100 " << first_half / eps << " last100 "
                << second_half / eps << " end_dist " << end_dist / eps
                << "\n";
    }
    std::cout << "iter " << it << ": eval " << r.eval_cost << " virtual";
    for (double v : r.virtual_cost) std::cout << ' ' << v;
    std::cout << " diversity " << r.diversity << " epochs " << r.epochs_run
              << " safety_events " << r.safety_events << "\n";
    if (it > 1 && r.eval_cost > prev * 1.02) ++violations;
    prev = r.eval_cost;
  }
  std::cout << "final < initial: " << (prev < initial ? "yes" : "NO")
            << ", violations(>2%) " << violations << "\n";
  return 0;
}
