#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ibrl/optim.hpp"
#include "ibrl/rollout.hpp"

using namespace ibrl;
using nets::Head;
using nets::Network;
using rollout::RolloutContext;
using rollout::RolloutPlan;
using rollout::Trajectory;

namespace {

struct Setup {
  envs::Environment env = envs::Environment::ib_surrogate();
  RolloutContext ctx;
  Network transition;
  Network reward;
  Network policy;

  explicit Setup(int window, std::uint64_t seed = 42) {
    ctx.spec = env.spec();
    ctx.window = window;
    const int state_dim = window * ctx.spec.obs_dim;
    transition = nets::mlp_init({state_dim + ctx.spec.action_dim, 8,
                                 ctx.spec.obs_dim},
                                Head::kLinear, seed);
    reward = nets::mlp_init({state_dim + ctx.spec.action_dim, 8, 1},
                            Head::kLinear, seed + 1);
    policy = nets::mlp_init({state_dim, 8, ctx.spec.action_dim},
                            Head::kBounded, seed + 2, ctx.spec.action_lo,
                            ctx.spec.action_hi);
  }

  Vector start(std::uint64_t seed = 3) const {
    Rng rng = make_rng(seed);
    std::vector<Vector> obs{env.reset(rng)};
    for (int t = 0; t < ctx.window; ++t) {
      Rng step_rng = make_rng(seed, t + 1);
      obs.push_back(
          env.step(obs.back(), Vector::Zero(ctx.spec.action_dim), step_rng)
              .next_obs);
    }
    return envs::history_state(obs, ctx.window - 1, ctx.window);
  }
};

// Test-only reimplementation of the unrolled dynamics with plain Eigen
// forward passes; the oracle for the tape rollout.
double plain_reward_loss(const Setup& s, const Vector& policy_flat,
                         const std::vector<Vector>& starts,
                         const RolloutPlan& plan) {
  Network policy = s.policy;
  nets::from_params(policy, policy_flat);
  double acc = 0.0;
  for (const Vector& start : starts) {
    Vector state = s.ctx.spec.normalize_history(start);
    double w = plan.gamma;
    for (int t = 1; t < plan.horizon; ++t) {
      Vector action = nets::mlp_forward(policy, state);
      Vector action_norm = s.ctx.spec.normalize_action(action);
      Vector model_in(state.size() + action_norm.size());
      model_in << state, action_norm;
      Vector pred = nets::mlp_forward(s.transition, model_in)
                        .cwiseMax(-1.0)
                        .cwiseMin(1.0);
      const double reward = nets::mlp_forward(s.reward, model_in)[0];
      acc += -w * reward /
             (static_cast<double>(starts.size()) * plan.horizon);
      w *= plan.gamma;
      if (s.ctx.window > 1) {
        Vector next(state.size());
        next << state.tail(state.size() - s.ctx.spec.obs_dim), pred;
        state = next;
      } else {
        state = pred;
      }
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("H = 1 rollout is just the start state") {
  Setup s(3);
  ad::Tape tape;
  rollout::BoundModels models{nets::bind(tape, s.transition, false),
                              nets::bind(tape, s.reward, false), &s.ctx};
  nets::BoundNet policy = nets::bind(tape, s.policy, false);
  RolloutPlan plan;
  plan.horizon = 1;
  Trajectory traj =
      rollout::virtual_rollout(tape, models, policy, 0, s.start(), plan);
  CHECK(traj.states.size() == 1);
  CHECK(traj.actions.empty());
  CHECK(traj.rewards.empty());
  CHECK(rollout::discounted_return_t(tape, traj, 1.0).scalar() == 0.0);
}

TEST_CASE("identity transition keeps a constant-history start fixed") {
  Setup s(4);
  const int state_dim = s.ctx.window * s.ctx.spec.obs_dim;
  // Single affine layer that copies the newest observation block.
  s.transition = nets::mlp_init({state_dim + s.ctx.spec.action_dim,
                                 s.ctx.spec.obs_dim},
                                Head::kLinear, 0);
  Matrix w = Matrix::Zero(s.ctx.spec.obs_dim,
                          state_dim + s.ctx.spec.action_dim);
  for (int d = 0; d < s.ctx.spec.obs_dim; ++d)
    w(d, state_dim - s.ctx.spec.obs_dim + d) = 1.0;
  s.transition.weights[0] = w;
  s.transition.biases[0].setZero();

  // Constant-history start: every window slot equals observation 0.
  Rng rng = make_rng(9);
  std::vector<Vector> obs{s.env.reset(rng)};
  Vector start = envs::history_state(obs, 0, s.ctx.window);

  ad::Tape tape;
  rollout::BoundModels models{nets::bind(tape, s.transition, false),
                              nets::bind(tape, s.reward, false), &s.ctx};
  nets::BoundNet policy = nets::bind(tape, s.policy, false);
  RolloutPlan plan;
  plan.horizon = 6;
  Trajectory traj =
      rollout::virtual_rollout(tape, models, policy, 0, start, plan);
  const Vector first = Vector(traj.states.front().value());
  for (const ad::Var& state : traj.states)
    CHECK((Vector(state.value()) - first).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rollouts are deterministic") {
  Setup s(3);
  auto run = [&]() {
    ad::Tape tape;
    rollout::BoundModels models{nets::bind(tape, s.transition, false),
                                nets::bind(tape, s.reward, false), &s.ctx};
    nets::BoundNet policy = nets::bind(tape, s.policy, false);
    RolloutPlan plan;
    plan.horizon = 7;
    Trajectory traj =
        rollout::virtual_rollout(tape, models, policy, 0, s.start(), plan);
    std::vector<double> rewards;
    for (const ad::Var& r : traj.rewards) rewards.push_back(r.scalar());
    return rewards;
  };
  CHECK(run() == run());
}

TEST_CASE("rollout rejects a start state of the wrong size") {
  Setup s(3);
  ad::Tape tape;
  rollout::BoundModels models{nets::bind(tape, s.transition, false),
                              nets::bind(tape, s.reward, false), &s.ctx};
  nets::BoundNet policy = nets::bind(tape, s.policy, false);
  RolloutPlan plan;
  CHECK_THROWS_AS(rollout::virtual_rollout(tape, models, policy, 0,
                                           Vector::Zero(5), plan),
                  ContractError);
}

TEST_CASE("discounted return: undiscounted sum and gamma weighting") {
  ad::Tape tape;
  Trajectory traj;
  for (double r : {1.0, 1.0, 1.0}) traj.rewards.push_back(tape.constant(r));
  CHECK(rollout::discounted_return_t(tape, traj, 1.0).scalar() ==
        doctest::Approx(3.0));
  CHECK(rollout::discounted_return_t(tape, traj, 0.5).scalar() ==
        doctest::Approx(0.875));
  CHECK(rollout::discounted_return({1.0, 1.0, 1.0}, 0.5) ==
        doctest::Approx(0.875));
  CHECK(rollout::discounted_return({}, 0.5) == 0.0);
}

TEST_CASE("reward loss: substitution example with the 1/H factor") {
  ad::Tape tape;
  Trajectory traj;
  traj.states = {tape.constant(0.0), tape.constant(0.0), tape.constant(0.0)};
  traj.rewards = {tape.constant(2.0), tape.constant(4.0)};
  traj.actions = {tape.constant(0.0), tape.constant(0.0)};
  RolloutPlan plan;
  plan.gamma = 1.0;
  CHECK(rollout::reward_loss_t(tape, {traj}, plan).scalar() ==
        doctest::Approx(-2.0));
}

TEST_CASE("reward loss: zeros and linear scaling") {
  ad::Tape tape;
  auto make = [&](double r1, double r2) {
    Trajectory t;
    t.states = {tape.constant(0.0), tape.constant(0.0), tape.constant(0.0)};
    t.rewards = {tape.constant(r1), tape.constant(r2)};
    return t;
  };
  RolloutPlan plan;
  CHECK(rollout::reward_loss_t(tape, {make(0.0, 0.0)}, plan).scalar() == 0.0);
  const double base =
      rollout::reward_loss_t(tape, {make(1.5, -0.5)}, plan).scalar();
  const double scaled =
      rollout::reward_loss_t(tape, {make(4.5, -1.5)}, plan).scalar();
  CHECK(scaled == doctest::Approx(3.0 * base));
}

TEST_CASE("reward loss is invariant under trajectory permutation") {
  Setup s(2);
  ad::Tape tape;
  rollout::BoundModels models{nets::bind(tape, s.transition, false),
                              nets::bind(tape, s.reward, false), &s.ctx};
  nets::BoundNet policy = nets::bind(tape, s.policy, false);
  RolloutPlan plan;
  plan.horizon = 5;
  std::vector<Trajectory> trajs;
  for (int n = 0; n < 4; ++n)
    trajs.push_back(rollout::virtual_rollout(tape, models, policy, 0,
                                             s.start(n + 1), plan));
  const double forward = rollout::reward_loss_t(tape, trajs, plan).scalar();
  std::reverse(trajs.begin(), trajs.end());
  CHECK(rollout::reward_loss_t(tape, trajs, plan).scalar() ==
        doctest::Approx(forward));
}

TEST_CASE("with gamma = 1 the loss is minus the mean per-step reward") {
  ad::Tape tape;
  Trajectory traj;
  traj.states = {tape.constant(0.0), tape.constant(0.0), tape.constant(0.0),
                 tape.constant(0.0)};
  traj.rewards = {tape.constant(1.0), tape.constant(2.0),
                  tape.constant(3.0)};
  RolloutPlan plan;
  // H = 4 states: mean per-step reward uses the printed 1/H normalization.
  CHECK(rollout::reward_loss_t(tape, {traj}, plan).scalar() ==
        doctest::Approx(-(1.0 + 2.0 + 3.0) / 4.0));
}

TEST_CASE("reward-loss gradient through the rollout matches the oracle") {
  Setup s(2, 77);
  RolloutPlan plan;
  plan.horizon = 6;
  plan.gamma = 0.95;
  std::vector<Vector> starts{s.start(1), s.start(2)};

  ad::Tape tape;
  rollout::BoundModels models{nets::bind(tape, s.transition, false),
                              nets::bind(tape, s.reward, false), &s.ctx};
  nets::BoundNet policy = nets::bind(tape, s.policy, true);
  std::vector<Trajectory> trajs;
  for (const Vector& start : starts)
    trajs.push_back(
        rollout::virtual_rollout(tape, models, policy, 0, start, plan));
  ad::Var loss = rollout::reward_loss_t(tape, trajs, plan);
  Vector grad = ad::backward_grad(tape, loss, policy.param_vars());

  auto f = [&](const Vector& flat) {
    return plain_reward_loss(s, flat, starts, plan);
  };
  const Vector flat = nets::to_params(s.policy).values();
  CHECK(std::abs(loss.scalar() - f(flat)) < 1e-12);
  Vector fd = finite_diff_grad(f, flat, 1e-5);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double scale = std::max({std::abs(grad[i]), std::abs(fd[i]), 1e-4});
    worst = std::max(worst, std::abs(grad[i] - fd[i]) / scale);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("constrained rollouts keep v, g, h inside the bound exactly") {
  Setup s(3, 11);
  safety::ConstrainedPolicy constrained;
  constrained.state_lo = 30.0;
  constrained.state_hi = 70.0;
  constrained.action_lo = s.ctx.spec.action_lo;
  constrained.action_hi = s.ctx.spec.action_hi;
  constrained.effect = s.ctx.spec.effect;
  s.ctx.constrained = &constrained;

  RolloutPlan plan;
  plan.horizon = 40;
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vector> obs{s.env.reset_in(30.0, 70.0, rng)};
    Vector start = envs::history_state(obs, 0, s.ctx.window);

    ad::Tape tape;
    rollout::BoundModels models{nets::bind(tape, s.transition, false),
                                nets::bind(tape, s.reward, false), &s.ctx};
    nets::BoundNet policy = nets::bind(tape, s.policy, false);
    Trajectory traj =
        rollout::virtual_rollout(tape, models, policy, 0, start, plan);
    const int base = (s.ctx.window - 1) * s.ctx.spec.obs_dim;
    for (const ad::Var& state : traj.states) {
      Vector norm = Vector(state.value()).segment(base, s.ctx.spec.obs_dim);
      Vector raw = s.ctx.spec.denormalize_obs(norm);
      for (int d : {1, 2, 3}) {
        CHECK(raw[d] >= 30.0);
        CHECK(raw[d] <= 70.0);
      }
    }
  }
}
