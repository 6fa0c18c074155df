#include "ibrl/rollout.hpp"

#include <cmath>

namespace ibrl::rollout {

namespace {

// Constrained-dimension values of the newest observation in a normalized
// history state, denormalized back to raw units.
ad::Var constrained_values_raw(ad::Tape& tape, ad::Var history,
                               const RolloutContext& ctx) {
  const envs::EnvSpec& spec = ctx.spec;
  const int base = (ctx.window - 1) * spec.obs_dim;
  std::vector<ad::Var> parts;
  parts.reserve(spec.constrained_dims.size());
  Vector lo(spec.constrained_dims.size());
  Vector span(spec.constrained_dims.size());
  for (std::size_t i = 0; i < spec.constrained_dims.size(); ++i) {
    const int dim = spec.constrained_dims[i];
    parts.push_back(tape.slice_rows(history, base + dim, 1));
    lo[i] = spec.obs_lo[dim];
    span[i] = spec.obs_hi[dim] - spec.obs_lo[dim];
  }
  ad::Var norm = tape.concat_rows(parts);
  ad::Var shifted = tape.scale(tape.add_const(norm, 1.0), 0.5);
  return tape.add(tape.constant(Matrix(lo)),
                  tape.cmul(tape.constant(Matrix(span)), shifted));
}

ad::Var normalize_rows(ad::Tape& tape, ad::Var raw, const Vector& lo,
                       const Vector& hi) {
  Vector two_over_span = 2.0 * (hi - lo).cwiseInverse();
  ad::Var centered = tape.sub(raw, tape.constant(Matrix(lo)));
  return tape.add_const(
      tape.cmul(centered, tape.constant(Matrix(two_over_span))), -1.0);
}

}  // namespace

Trajectory virtual_rollout(ad::Tape& tape, const BoundModels& models,
                           const nets::BoundNet& policy, int policy_index,
                           const Vector& start_history_raw,
                           const RolloutPlan& plan) {
  require(models.ctx != nullptr, "virtual_rollout: missing context");
  const RolloutContext& ctx = *models.ctx;
  const envs::EnvSpec& spec = ctx.spec;
  require(plan.horizon >= 1, "virtual_rollout: horizon must be >= 1");
  require(start_history_raw.size() ==
              static_cast<Eigen::Index>(ctx.window) * spec.obs_dim,
          "virtual_rollout: start state does not match window * obs_dim");

  Trajectory traj;
  traj.policy_index = policy_index;
  traj.states.reserve(plan.horizon);
  traj.actions.reserve(plan.horizon - 1);
  traj.rewards.reserve(plan.horizon - 1);

  ad::Var state = tape.constant(
      Matrix(spec.normalize_history(start_history_raw)));
  traj.states.push_back(state);

  for (int t = 1; t < plan.horizon; ++t) {
    ad::Var action = nets::forward(tape, policy, state);
    ad::Var cvals_raw;
    if (ctx.constrained != nullptr) {
      cvals_raw = constrained_values_raw(tape, state, ctx);
      action = safety::constrain_action_t(tape, action, cvals_raw,
                                          *ctx.constrained);
    }
    ad::Var action_norm =
        normalize_rows(tape, action, spec.action_lo, spec.action_hi);
    ad::Var model_in = tape.concat_rows({state, action_norm});
    ad::Var pred = nets::forward(tape, models.transition, model_in);
    if (ctx.transition_output == TransitionOutput::kDelta) {
      ad::Var newest = tape.slice_rows(
          state, (ctx.window - 1) * spec.obs_dim, spec.obs_dim);
      pred = tape.add(newest, pred);
    }
    ad::Var reward = nets::forward(tape, models.reward, model_in);

    ad::Var next_obs = pred;
    if (ctx.constrained != nullptr) {
      // Advance the linearly driven dimensions by the known rule and keep
      // the model prediction for the rest.
      ad::Var next_c_raw = tape.add(
          cvals_raw,
          tape.cmul(tape.constant(Matrix(ctx.constrained->effect)), action));
      Vector lo(spec.constrained_dims.size());
      Vector hi(spec.constrained_dims.size());
      for (std::size_t i = 0; i < spec.constrained_dims.size(); ++i) {
        lo[i] = spec.obs_lo[spec.constrained_dims[i]];
        hi[i] = spec.obs_hi[spec.constrained_dims[i]];
      }
      ad::Var next_c_norm = normalize_rows(tape, next_c_raw, lo, hi);
      std::vector<ad::Var> dims;
      dims.reserve(spec.obs_dim);
      for (int d = 0; d < spec.obs_dim; ++d) {
        auto it = std::find(spec.constrained_dims.begin(),
                            spec.constrained_dims.end(), d);
        if (it == spec.constrained_dims.end()) {
          dims.push_back(tape.slice_rows(pred, d, 1));
        } else {
          const int i =
              static_cast<int>(it - spec.constrained_dims.begin());
          dims.push_back(tape.slice_rows(next_c_norm, i, 1));
        }
      }
      next_obs = tape.concat_rows(dims);
    }

    // Keep virtual observations inside the declared ranges, as the true
    // environments do; unbounded model drift otherwise leaves the data
    // manifold within a few steps.
    {
      const Eigen::Index d = spec.obs_dim;
      next_obs = tape.cmin(
          tape.cmax(next_obs,
                    tape.constant(Matrix(Vector::Constant(d, -1.0)))),
          tape.constant(Matrix(Vector::Constant(d, 1.0))));
    }

    ad::Var next_state =
        ctx.window > 1
            ? tape.concat_rows({tape.slice_rows(state, spec.obs_dim,
                                                (ctx.window - 1) *
                                                    spec.obs_dim),
                                next_obs})
            : next_obs;

    traj.actions.push_back(action);
    traj.rewards.push_back(reward);
    traj.states.push_back(next_state);
    state = next_state;
  }
  return traj;
}

ad::Var discounted_return_t(ad::Tape& tape, const Trajectory& traj,
                            double gamma) {
  if (traj.rewards.empty()) return tape.constant(0.0);
  std::vector<double> weights(traj.rewards.size());
  double w = gamma;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    weights[t] = w;
    w *= gamma;
  }
  return tape.weighted_sum(traj.rewards, weights);
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0;
  double w = gamma;
  for (double r : rewards) {
    acc += w * r;
    w *= gamma;
  }
  return acc;
}

ad::Var reward_loss_t(ad::Tape& tape, const std::vector<Trajectory>& trajs,
                      const RolloutPlan& plan) {
  require(!trajs.empty(), "reward_loss: no trajectories");
  const std::size_t h_states = trajs.front().states.size();
  for (const Trajectory& traj : trajs)
    require(traj.states.size() == h_states,
            "reward_loss: inconsistent horizons");

  const double norm = 1.0 / (static_cast<double>(trajs.size()) *
                             static_cast<double>(h_states));
  std::vector<ad::Var> terms;
  std::vector<double> weights;
  terms.reserve(trajs.size() * (h_states - 1));
  weights.reserve(terms.capacity());
  for (const Trajectory& traj : trajs) {
    double w = plan.gamma;
    for (const ad::Var& r : traj.rewards) {
      terms.push_back(r);
      weights.push_back(-norm * w);
      w *= plan.gamma;
    }
  }
  if (terms.empty()) return tape.constant(0.0);
  return tape.weighted_sum(terms, weights);
}

}  // namespace ibrl::rollout
