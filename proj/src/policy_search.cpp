#include "ibrl/policy_search.hpp"

#include <algorithm>
#include <numeric>

#include "ibrl/optim.hpp"

namespace ibrl::search {

namespace {

using rollout::Trajectory;

// Collects the soft-constraint or objective terms that need the behavior
// policy evaluated along the trajectories.
struct BehaviorTerms {
  std::vector<ad::Var> deviations;  // ||a - mu_beta(s)||_2 per (k, t)
  std::vector<ad::Var> zone_terms;  // max(G + delta, 0) per (k, t)
};

BehaviorTerms behavior_terms(ad::Tape& tape,
                             const std::vector<std::vector<Trajectory>>& by_policy,
                             const nets::BoundNet& behavior, bool want_zone,
                             double delta) {
  BehaviorTerms out;
  for (const auto& group : by_policy) {
    for (const Trajectory& traj : group) {
      for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) {
        nets::BoundGaussianOutput beta =
            nets::forward_gaussian(tape, behavior, traj.states[t]);
        if (want_zone) {
          ad::Var g = safety::geo_mean_penalty_t(tape, traj.actions[t],
                                                 beta.mean, beta.sigma);
          out.zone_terms.push_back(
              tape.max_zero(tape.add_const(g, delta)));
        } else {
          out.deviations.push_back(
              safety::behavior_penalty_t(tape, traj.actions[t], beta.mean));
        }
      }
    }
  }
  return out;
}

ad::Var diversity_term(ad::Tape& tape,
                       const std::vector<std::vector<Trajectory>>& by_policy,
                       const diversity::DiversityConfig& div,
                       double* measure_value) {
  *measure_value = 0.0;
  const std::size_t k = by_policy.size();
  const std::size_t first = div.exclude_first ? 1 : 0;
  if (k - first < 2) return tape.constant(0.0);
  const std::size_t groups = by_policy.front().size();

  std::vector<ad::Var> per_group;
  per_group.reserve(groups);
  for (std::size_t n = 0; n < groups; ++n) {
    std::vector<diversity::VarPath> pool;
    pool.reserve(k - first);
    for (std::size_t i = first; i < k; ++i)
      pool.push_back(by_policy[i][n].states);
    per_group.push_back(div.measure == diversity::Measure::kMinLsed
                            ? diversity::min_lsed_t(tape, pool, div.norm)
                            : diversity::lsed_all_t(tape, pool, div.norm,
                                                    div.pair_average));
  }
  const std::vector<double> weights(per_group.size(),
                                    1.0 / static_cast<double>(groups));
  ad::Var measure = tape.weighted_sum(per_group, weights);
  *measure_value = measure.scalar();
  return measure;
}

std::vector<Trajectory> flatten(
    const std::vector<std::vector<Trajectory>>& by_policy) {
  std::vector<Trajectory> all;
  for (const auto& group : by_policy)
    for (const Trajectory& traj : group) all.push_back(traj);
  return all;
}

}  // namespace

PolicyEnsemble make_ensemble(int count, const std::vector<int>& hidden,
                             const rollout::RolloutContext& ctx,
                             std::uint64_t seed) {
  require(count >= 1, "make_ensemble: need at least one policy");
  std::vector<int> sizes;
  sizes.push_back(ctx.window * ctx.spec.obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(ctx.spec.action_dim);
  PolicyEnsemble ensemble;
  for (int k = 0; k < count; ++k)
    ensemble.members.push_back(
        nets::mlp_init(sizes, nets::Head::kBounded, mix_seed(seed, k),
                       ctx.spec.action_lo, ctx.spec.action_hi));
  return ensemble;
}

LossBreakdown combined_loss(
    ad::Tape& tape,
    const std::vector<std::vector<Trajectory>>& by_policy,
    const nets::BoundNet* behavior, const safety::SafetySpec& safety_spec,
    const diversity::DiversityConfig& div, const rollout::RolloutPlan& plan) {
  require(!by_policy.empty() && !by_policy.front().empty(),
          "combined_loss: no trajectories");
  const std::size_t k = by_policy.size();
  const std::size_t groups = by_policy.front().size();
  for (const auto& group : by_policy)
    require(group.size() == groups,
            "combined_loss: policies carry different start-state counts");
  const double h_states =
      static_cast<double>(by_policy.front().front().states.size());

  LossBreakdown out;
  ad::Var base;
  if (const auto* obj = std::get_if<safety::Objective>(&safety_spec)) {
    require(behavior != nullptr,
            "combined_loss: objective safety needs the behavior policy");
    // (1/(K H)) sum_{k,t} [ -gamma^t lambda e + (1 - lambda) p ], averaged
    // over start-state groups; the deviation term stays undiscounted.
    BehaviorTerms terms =
        behavior_terms(tape, by_policy, *behavior, false, 0.0);
    const double norm = 1.0 / (static_cast<double>(k) * h_states *
                               static_cast<double>(groups));
    std::vector<ad::Var> parts;
    std::vector<double> weights;
    for (const auto& group : by_policy) {
      for (const Trajectory& traj : group) {
        double w = plan.gamma;
        for (const ad::Var& r : traj.rewards) {
          parts.push_back(r);
          weights.push_back(-norm * obj->lambda * w);
          w *= plan.gamma;
        }
      }
    }
    for (const ad::Var& p : terms.deviations) {
      parts.push_back(p);
      weights.push_back(norm * (1.0 - obj->lambda));
    }
    base = parts.empty() ? tape.constant(0.0)
                         : tape.weighted_sum(parts, weights);
    out.reward_term = base.scalar();
  } else {
    base = rollout::reward_loss_t(tape, flatten(by_policy), plan);
    out.reward_term = base.scalar();
    if (const auto* soft =
            std::get_if<safety::SoftConstraint>(&safety_spec)) {
      require(behavior != nullptr,
              "combined_loss: soft constraint needs the behavior policy");
      BehaviorTerms terms =
          behavior_terms(tape, by_policy, *behavior, true, soft->delta);
      if (!terms.zone_terms.empty()) {
        const double norm =
            soft->alpha_s / (static_cast<double>(k) * h_states *
                             static_cast<double>(groups));
        ad::Var zone = tape.weighted_sum(
            terms.zone_terms,
            std::vector<double>(terms.zone_terms.size(), norm));
        out.safety_term = zone.scalar();
        base = tape.add(base, zone);
      }
    }
  }

  if (div.alpha_d > 0.0) {
    ad::Var measure =
        diversity_term(tape, by_policy, div, &out.diversity_value);
    base = tape.sub(base, tape.scale(measure, div.alpha_d));
  }
  out.total = base;
  return out;
}

TrainLog train_policies(const envs::Batch& batch, const ModelSet& models,
                        PolicyEnsemble& ensemble,
                        const rollout::RolloutContext& ctx,
                        const safety::SafetySpec& safety_spec,
                        const diversity::DiversityConfig& div,
                        const rollout::RolloutPlan& plan,
                        const TrainConfig& cfg) {
  require(!batch.transitions.empty(), "train_policies: empty batch");
  require(ensemble.size() >= 1, "train_policies: empty ensemble");

  const int k = ensemble.size();
  const int n_data = static_cast<int>(batch.transitions.size());
  Rng rng = make_rng(cfg.seed);

  // Fixed held-out start states for the convergence check.
  const int n_holdout = std::min(cfg.holdout_starts, n_data);
  std::vector<int> indices(n_data);
  std::iota(indices.begin(), indices.end(), 0);
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<int> holdout(indices.begin(), indices.begin() + n_holdout);

  // All policies share one flat parameter vector, updated jointly.
  std::vector<ParamVector> member_params;
  Eigen::Index total = 0;
  for (const nets::Network& net : ensemble.members) {
    member_params.push_back(nets::to_params(net));
    total += member_params.back().size();
  }
  Vector theta(total);
  {
    Eigen::Index at = 0;
    for (const ParamVector& p : member_params) {
      theta.segment(at, p.size()) = p.values();
      at += p.size();
    }
  }

  auto write_back = [&](const Vector& flat) {
    Eigen::Index at = 0;
    for (int i = 0; i < k; ++i) {
      nets::from_params(ensemble.members[i],
                        flat.segment(at, member_params[i].size()));
      at += member_params[i].size();
    }
  };

  auto build = [&](ad::Tape& tape, const std::vector<int>& starts,
                   bool trainable, std::vector<ad::Var>* params,
                   LossBreakdown* breakdown) {
    nets::BoundNet transition = nets::bind(tape, models.transition, false);
    nets::BoundNet reward = nets::bind(tape, models.reward, false);
    nets::BoundNet behavior;
    if (models.behavior.has_value())
      behavior = nets::bind(tape, *models.behavior, false);
    rollout::BoundModels bound{transition, reward, &ctx};

    std::vector<std::vector<Trajectory>> by_policy(k);
    for (int i = 0; i < k; ++i) {
      nets::BoundNet policy = nets::bind(tape, ensemble.members[i], trainable);
      if (trainable && params != nullptr)
        for (const ad::Var& v : policy.param_vars()) params->push_back(v);
      for (int s : starts)
        by_policy[i].push_back(rollout::virtual_rollout(
            tape, bound, policy, i, batch.transitions[s].state, plan));
    }
    *breakdown = combined_loss(tape, by_policy,
                               models.behavior.has_value() ? &behavior
                                                           : nullptr,
                               safety_spec, div, plan);
    return by_policy;
  };

  AdamState adam(total, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  TrainLog log;
  double best = std::numeric_limits<double>::infinity();
  Vector best_theta = theta;
  int stale = 0;

  ad::Tape tape;
  std::vector<int> pool(indices);  // draw minibatches from the full batch
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const int n_batch = std::min(cfg.minibatch_starts, n_data);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<int> starts(pool.begin(), pool.begin() + n_batch);

    tape.rewind();
    write_back(theta);
    std::vector<ad::Var> params;
    LossBreakdown breakdown;
    build(tape, starts, true, &params, &breakdown);
    Vector grad = ad::backward_grad(tape, breakdown.total, params);
    adam_step(adam, theta, grad);
    ++log.epochs_run;

    // Convergence check on the held-out start states.
    tape.rewind();
    write_back(theta);
    LossBreakdown held;
    build(tape, holdout, false, nullptr, &held);
    log.holdout_losses.push_back(held.total.scalar());
    if (held.total.scalar() < best - cfg.min_delta) {
      best = held.total.scalar();
      best_theta = theta;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      log.early_stopped = true;
      break;
    }
  }

  write_back(best_theta);

  // Final holdout rollouts for reporting: per-policy virtual return and the
  // diversity measure value.
  tape.rewind();
  LossBreakdown final_breakdown;
  std::vector<std::vector<Trajectory>> by_policy =
      build(tape, holdout, false, nullptr, &final_breakdown);
  log.virtual_mean_return.assign(k, 0.0);
  for (int i = 0; i < k; ++i) {
    double acc = 0.0;
    for (const Trajectory& traj : by_policy[i])
      acc += rollout::discounted_return_t(tape, traj, plan.gamma).scalar();
    log.virtual_mean_return[i] = acc / static_cast<double>(holdout.size());
  }
  diversity::DiversityConfig probe = div;
  double measure_value = 0.0;
  if (k - (div.exclude_first ? 1 : 0) >= 2) {
    ad::Tape probe_tape;
    // Reuse the numeric state paths for the measure value.
    std::vector<std::vector<diversity::StatePath>> groups(
        by_policy.front().size());
    for (std::size_t n = 0; n < by_policy.front().size(); ++n) {
      for (int i = div.exclude_first ? 1 : 0; i < k; ++i) {
        diversity::StatePath path;
        for (const ad::Var& s : by_policy[i][n].states)
          path.push_back(Vector(s.value()));
        groups[n].push_back(std::move(path));
      }
    }
    double acc = 0.0;
    for (const auto& pool_paths : groups)
      acc += probe.measure == diversity::Measure::kMinLsed
                 ? diversity::min_lsed(pool_paths, probe.norm)
                 : diversity::lsed_all(pool_paths, probe.norm,
                                       probe.pair_average);
    measure_value = acc / static_cast<double>(groups.size());
  }
  log.final_diversity = measure_value;
  return log;
}

}  // namespace ibrl::search
