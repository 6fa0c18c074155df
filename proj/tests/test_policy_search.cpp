#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ibrl/loop.hpp"
#include "ibrl/optim.hpp"
#include "ibrl/policy_search.hpp"

using namespace ibrl;
using nets::Head;
using nets::Network;
using rollout::RolloutContext;
using rollout::RolloutPlan;
using rollout::Trajectory;
using search::LossBreakdown;
using search::ModelSet;
using search::PolicyEnsemble;

namespace {

struct World {
  envs::Environment env = envs::Environment::grid2d();
  RolloutContext ctx;
  ModelSet models;
  envs::Batch batch;

  explicit World(std::uint64_t seed = 5, int window = 1) {
    ctx.spec = env.spec();
    ctx.window = window;
    batch = envs::collect_batch(env, envs::CollectPolicy::kBehavior, 8, 30,
                                seed, window);
    const int state_dim = window * ctx.spec.obs_dim;
    models.transition = nets::mlp_init(
        {state_dim + ctx.spec.action_dim, 12, ctx.spec.obs_dim},
        Head::kLinear, seed + 1);
    models.reward = nets::mlp_init({state_dim + ctx.spec.action_dim, 12, 1},
                                   Head::kLinear, seed + 2);
    models.behavior = nets::mlp_init({state_dim, 12, ctx.spec.action_dim},
                                     Head::kGaussian, seed + 3);
  }
};

std::vector<std::vector<Trajectory>> roll_ensemble(
    ad::Tape& tape, const World& w, PolicyEnsemble& ensemble,
    const RolloutPlan& plan, const std::vector<int>& starts, bool trainable,
    std::vector<ad::Var>* params, nets::BoundNet* behavior) {
  rollout::BoundModels bound{nets::bind(tape, w.models.transition, false),
                             nets::bind(tape, w.models.reward, false),
                             &w.ctx};
  *behavior = nets::bind(tape, *w.models.behavior, false);
  std::vector<std::vector<Trajectory>> by_policy(ensemble.size());
  for (int k = 0; k < ensemble.size(); ++k) {
    nets::BoundNet policy = nets::bind(tape, ensemble.members[k], trainable);
    if (params != nullptr)
      for (const ad::Var& v : policy.param_vars()) params->push_back(v);
    for (int s : starts)
      by_policy[k].push_back(rollout::virtual_rollout(
          tape, bound, policy, k, w.batch.transitions[s].state, plan));
  }
  return by_policy;
}

}  // namespace

TEST_CASE("combined loss degenerates to the reward loss") {
  World w;
  PolicyEnsemble ensemble = search::make_ensemble(2, {8}, w.ctx, 3);
  RolloutPlan plan;
  plan.horizon = 5;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {0, 5}, false, nullptr,
                    &behavior);
  diversity::DiversityConfig div;  // alpha_d = 0
  safety::SafetySpec soft = safety::SoftConstraint{0.0, 0.5};
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, &behavior, soft, div, plan);

  std::vector<Trajectory> flat;
  for (const auto& group : by_policy)
    for (const Trajectory& t : group) flat.push_back(t);
  CHECK(loss.total.scalar() ==
        doctest::Approx(rollout::reward_loss_t(tape, flat, plan).scalar()));
  CHECK(loss.safety_term == 0.0);
  CHECK(loss.diversity_value == 0.0);
}

TEST_CASE("K = 2 with the first policy excluded has an empty diversity pool") {
  World w;
  PolicyEnsemble ensemble = search::make_ensemble(2, {8}, w.ctx, 4);
  RolloutPlan plan;
  plan.horizon = 4;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {1}, false, nullptr, &behavior);
  diversity::DiversityConfig div;
  div.alpha_d = 0.5;
  safety::SafetySpec soft = safety::SoftConstraint{0.0, 0.5};
  LossBreakdown with_div =
      search::combined_loss(tape, by_policy, &behavior, soft, div, plan);
  div.alpha_d = 0.0;
  LossBreakdown without =
      search::combined_loss(tape, by_policy, &behavior, soft, div, plan);
  CHECK(with_div.total.scalar() == doctest::Approx(without.total.scalar()));
  CHECK(with_div.diversity_value == 0.0);
}

TEST_CASE("combined loss composes reward + safety - alpha_d * diversity") {
  World w;
  PolicyEnsemble ensemble = search::make_ensemble(3, {8}, w.ctx, 6);
  RolloutPlan plan;
  plan.horizon = 5;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {2, 9}, false, nullptr,
                    &behavior);
  diversity::DiversityConfig div;
  div.alpha_d = 0.15;
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, &behavior, soft, div, plan);
  CHECK(loss.total.scalar() ==
        doctest::Approx(loss.reward_term + loss.safety_term -
                        0.15 * loss.diversity_value));
  // Substitution check of the combination rule itself.
  CHECK(-2.0 + 0.3 - 0.15 * 1.0 == doctest::Approx(-1.85));
}

TEST_CASE("constrained-policy variant carries no behavior-zone term") {
  World w;
  safety::ConstrainedPolicy constrained;
  constrained.state_lo = 1.0;
  constrained.state_hi = 9.0;
  constrained.action_lo = w.ctx.spec.action_lo;
  constrained.action_hi = w.ctx.spec.action_hi;
  constrained.effect = w.ctx.spec.effect;
  w.ctx.constrained = &constrained;

  PolicyEnsemble ensemble = search::make_ensemble(3, {8}, w.ctx, 8);
  RolloutPlan plan;
  plan.horizon = 4;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {3}, false, nullptr, &behavior);
  diversity::DiversityConfig div;
  div.alpha_d = 0.2;
  safety::SafetySpec spec = constrained;
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, nullptr, spec, div, plan);
  CHECK(loss.safety_term == 0.0);

  std::vector<Trajectory> flat;
  for (const auto& group : by_policy)
    for (const Trajectory& t : group) flat.push_back(t);
  CHECK(loss.total.scalar() ==
        doctest::Approx(rollout::reward_loss_t(tape, flat, plan).scalar() -
                        0.2 * loss.diversity_value));
}

TEST_CASE("objective variant: lambda = 1 equals pure reward maximization") {
  World w;
  PolicyEnsemble ensemble = search::make_ensemble(2, {8}, w.ctx, 9);
  RolloutPlan plan;
  plan.horizon = 5;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {0, 7}, false, nullptr,
                    &behavior);
  diversity::DiversityConfig div;
  safety::SafetySpec objective = safety::Objective{1.0};
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, &behavior, objective, div, plan);
  std::vector<Trajectory> flat;
  for (const auto& group : by_policy)
    for (const Trajectory& t : group) flat.push_back(t);
  CHECK(loss.total.scalar() ==
        doctest::Approx(rollout::reward_loss_t(tape, flat, plan).scalar()));
}

TEST_CASE("objective variant: lambda = 0 is the mean deviation penalty") {
  World w;
  PolicyEnsemble ensemble = search::make_ensemble(1, {8}, w.ctx, 10);
  RolloutPlan plan;
  plan.horizon = 4;

  ad::Tape tape;
  nets::BoundNet behavior;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, {4}, false, nullptr, &behavior);
  safety::SafetySpec objective = safety::Objective{0.0};
  diversity::DiversityConfig div;
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, &behavior, objective, div, plan);

  // Manual recomputation of (1/(K H)) sum ||pi - mu_beta||.
  double manual = 0.0;
  const Trajectory& traj = by_policy[0][0];
  for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) {
    nets::GaussianOutput beta = nets::mlp_forward_gaussian(
        *w.models.behavior, Vector(traj.states[t].value()));
    manual += (Vector(traj.actions[t].value()) - beta.mean).norm();
  }
  manual /= static_cast<double>(traj.states.size());
  CHECK(loss.total.scalar() == doctest::Approx(manual));
}

TEST_CASE("combined-loss gradient matches finite differences") {
  World w(21);
  PolicyEnsemble ensemble = search::make_ensemble(3, {5}, w.ctx, 11);
  RolloutPlan plan;
  plan.horizon = 4;
  plan.gamma = 1.0;
  diversity::DiversityConfig div;
  div.alpha_d = 0.3;
  safety::SafetySpec soft = safety::SoftConstraint{2.0, 0.6};
  const std::vector<int> starts{1, 12};

  ad::Tape tape;
  nets::BoundNet behavior;
  std::vector<ad::Var> params;
  auto by_policy =
      roll_ensemble(tape, w, ensemble, plan, starts, true, &params,
                    &behavior);
  LossBreakdown loss =
      search::combined_loss(tape, by_policy, &behavior, soft, div, plan);
  Vector grad = ad::backward_grad(tape, loss.total, params);

  Vector flat(grad.size());
  {
    Eigen::Index at = 0;
    for (const Network& net : ensemble.members) {
      const Vector v = nets::to_params(net).values();
      flat.segment(at, v.size()) = v;
      at += v.size();
    }
  }
  auto f = [&](const Vector& x) {
    PolicyEnsemble probe = ensemble;
    Eigen::Index at = 0;
    for (Network& net : probe.members) {
      nets::from_params(net, x.segment(at, net.parameter_count()));
      at += net.parameter_count();
    }
    ad::Tape t2;
    nets::BoundNet b2;
    auto probe_paths =
        roll_ensemble(t2, w, probe, plan, starts, false, nullptr, &b2);
    return search::combined_loss(t2, probe_paths, &b2, soft, div, plan)
        .total.scalar();
  };
  Vector fd = finite_diff_grad(f, flat, 1e-5);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double scale = std::max({std::abs(grad[i]), std::abs(fd[i]), 1e-4});
    worst = std::max(worst, std::abs(grad[i] - fd[i]) / scale);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("policy 1 gradient is independent of the diversity weight") {
  World w(31);
  PolicyEnsemble ensemble = search::make_ensemble(3, {6}, w.ctx, 13);
  RolloutPlan plan;
  plan.horizon = 4;
  const std::vector<int> starts{0, 8};
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};

  auto grad_with_alpha = [&](double alpha_d) {
    ad::Tape tape;
    nets::BoundNet behavior;
    std::vector<ad::Var> params;
    auto by_policy =
        roll_ensemble(tape, w, ensemble, plan, starts, true, &params,
                      &behavior);
    diversity::DiversityConfig div;
    div.alpha_d = alpha_d;
    LossBreakdown loss =
        search::combined_loss(tape, by_policy, &behavior, soft, div, plan);
    return ad::backward_grad(tape, loss.total, params);
  };

  const Vector g0 = grad_with_alpha(0.0);
  const Vector g1 = grad_with_alpha(0.7);
  const Eigen::Index per_policy = ensemble.members[0].parameter_count();
  CHECK((g0.head(per_policy) - g1.head(per_policy)).cwiseAbs().maxCoeff() <
        1e-14);
  CHECK((g0.tail(g0.size() - per_policy) - g1.tail(g0.size() - per_policy))
            .cwiseAbs()
            .maxCoeff() > 1e-9);
}

TEST_CASE("identically seeded members stay identical without diversity") {
  World w(41);
  RolloutContext ctx = w.ctx;
  // Same creation seed for every member.
  PolicyEnsemble ensemble;
  std::vector<int> sizes{ctx.window * ctx.spec.obs_dim, 6,
                         ctx.spec.action_dim};
  for (int k = 0; k < 3; ++k)
    ensemble.members.push_back(nets::mlp_init(sizes, Head::kBounded, 99,
                                              ctx.spec.action_lo,
                                              ctx.spec.action_hi));
  RolloutPlan plan;
  plan.horizon = 4;
  search::TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.minibatch_starts = 4;
  cfg.holdout_starts = 4;
  cfg.seed = 5;
  diversity::DiversityConfig div;  // alpha_d = 0
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};
  search::train_policies(w.batch, w.models, ensemble, ctx, soft, div, plan,
                         cfg);
  const Vector first = nets::to_params(ensemble.members[0]).values();
  for (int k = 1; k < 3; ++k)
    CHECK((nets::to_params(ensemble.members[k]).values() - first)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("training is deterministic given the seed") {
  World w(51);
  RolloutPlan plan;
  plan.horizon = 4;
  search::TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.minibatch_starts = 4;
  cfg.holdout_starts = 4;
  cfg.seed = 6;
  diversity::DiversityConfig div;
  div.alpha_d = 0.1;
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};

  auto run = [&]() {
    PolicyEnsemble ensemble = search::make_ensemble(3, {6}, w.ctx, 14);
    search::train_policies(w.batch, w.models, ensemble, w.ctx, soft, div,
                           plan, cfg);
    Vector all(3 * ensemble.members[0].parameter_count());
    Eigen::Index at = 0;
    for (const Network& net : ensemble.members) {
      all.segment(at, net.parameter_count()) = nets::to_params(net).values();
      at += net.parameter_count();
    }
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("diversity pressure raises min_lsed above its initial value") {
  World w(61);
  RolloutPlan plan;
  plan.horizon = 6;
  diversity::DiversityConfig div;
  div.alpha_d = 0.15;
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};

  PolicyEnsemble ensemble = search::make_ensemble(3, {8}, w.ctx, 15);
  search::TrainConfig cfg;
  cfg.max_epochs = 0;  // probe the untouched ensemble
  cfg.minibatch_starts = 6;
  cfg.holdout_starts = 6;
  cfg.seed = 7;
  search::TrainLog before = search::train_policies(
      w.batch, w.models, ensemble, w.ctx, soft, div, plan, cfg);

  cfg.max_epochs = 60;
  cfg.patience = 60;
  search::TrainLog after = search::train_policies(
      w.batch, w.models, ensemble, w.ctx, soft, div, plan, cfg);
  CHECK(after.final_diversity > before.final_diversity);
}

TEST_CASE("empty batch is rejected") {
  World w(71);
  envs::Batch empty;
  PolicyEnsemble ensemble = search::make_ensemble(2, {6}, w.ctx, 16);
  RolloutPlan plan;
  diversity::DiversityConfig div;
  safety::SafetySpec soft = safety::SoftConstraint{1.0, 0.5};
  CHECK_THROWS_AS(search::train_policies(empty, w.models, ensemble, w.ctx,
                                         soft, div, plan, {}),
                  ContractError);
}
