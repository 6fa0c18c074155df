#include "ibrl/envs.hpp"

#include <cmath>
#include <set>

#include "ibrl/safety.hpp"

namespace ibrl::envs {

namespace {

constexpr double kPi = 3.14159265358979323846;

EnvSpec make_grid_spec(const GridConfig& cfg) {
  EnvSpec spec;
  spec.id = "grid2d";
  spec.obs_dim = 2;
  spec.action_dim = 2;
  spec.obs_lo = Vector::Constant(2, cfg.lo);
  spec.obs_hi = Vector::Constant(2, cfg.hi);
  spec.action_lo = Vector::Constant(2, -cfg.a_max_step);
  spec.action_hi = Vector::Constant(2, cfg.a_max_step);
  spec.constrained_dims = {0, 1};
  spec.effect = Vector::Ones(2);
  return spec;
}

EnvSpec make_ib_spec(const IbConfig& cfg) {
  EnvSpec spec;
  spec.id = "ib_surrogate";
  spec.obs_dim = 6;
  spec.action_dim = 3;
  spec.obs_lo = Vector::Zero(6);
  spec.obs_hi = Vector::Zero(6);
  spec.obs_hi << 100.0, 100.0, 100.0, 100.0, 40.0, 8.0;
  spec.action_lo = Vector::Constant(3, -1.0);
  spec.action_hi = Vector::Constant(3, 1.0);
  spec.constrained_dims = {1, 2, 3};
  spec.effect = cfg.steering;
  return spec;
}

double fatigue_of(double v, double g, const IbConfig& cfg) {
  const double dv = v - (cfg.setpoint - 10.0);
  const double dg = g - (cfg.setpoint + 10.0);
  return (dv * dv + dg * dg) / 200.0;
}

double consumption_of(double h, double action_l1, const IbConfig& cfg) {
  return std::abs(h - (100.0 - cfg.setpoint)) / 10.0 +
         cfg.action_cost * action_l1;
}

}  // namespace

Vector EnvSpec::normalize_obs(const Vector& obs) const {
  require(obs.size() == obs_dim, "normalize_obs: dimension mismatch");
  return (2.0 * (obs - obs_lo).array() / (obs_hi - obs_lo).array() - 1.0)
      .matrix();
}

Vector EnvSpec::denormalize_obs(const Vector& normalized) const {
  require(normalized.size() == obs_dim, "denormalize_obs: dimension mismatch");
  return (obs_lo.array() +
          (normalized.array() + 1.0) / 2.0 * (obs_hi - obs_lo).array())
      .matrix();
}

Vector EnvSpec::normalize_history(const Vector& history) const {
  require(history.size() % obs_dim == 0,
          "normalize_history: length not a multiple of the observation size");
  Vector out(history.size());
  for (Eigen::Index at = 0; at < history.size(); at += obs_dim)
    out.segment(at, obs_dim) = normalize_obs(history.segment(at, obs_dim));
  return out;
}

Vector EnvSpec::normalize_action(const Vector& action) const {
  require(action.size() == action_dim, "normalize_action: dimension mismatch");
  return (2.0 * (action - action_lo).array() /
              (action_hi - action_lo).array() -
          1.0)
      .matrix();
}

Eigen::Vector2d grid2d_transition(const Eigen::Vector2d& s,
                                  const Eigen::Vector2d& a,
                                  const GridConfig& cfg) {
  Eigen::Vector2d step = a.cwiseMax(-cfg.a_max_step).cwiseMin(cfg.a_max_step);
  return (s + step).cwiseMax(cfg.lo).cwiseMin(cfg.hi);
}

double grid2d_reward(const Eigen::Vector2d& s, const GridConfig& cfg) {
  const Eigen::Vector2d d = s - cfg.reward_mean;
  const double det_sqrt = cfg.reward_std.prod();
  const double q = (d.array() / cfg.reward_std.array()).square().sum();
  return std::exp(-0.5 * q) / (std::pow(2.0 * kPi, 1.5) * det_sqrt);
}

Eigen::Vector2d grid2d_behavior_action(const Eigen::Vector2d& s, Rng& rng,
                                       const GridConfig& cfg) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg.random_action_prob) {
    std::uniform_real_distribution<double> act(-cfg.a_max_step,
                                               cfg.a_max_step);
    return Eigen::Vector2d(act(rng), act(rng));
  }
  const double da = (cfg.goal_a - s).norm();
  const double db = (cfg.goal_b - s).norm();
  const Eigen::Vector2d goal = da <= db ? cfg.goal_a : cfg.goal_b;
  const Eigen::Vector2d to_goal = goal - s;
  const double dist = to_goal.norm();
  if (dist == 0.0) return Eigen::Vector2d::Zero();
  return to_goal / dist * std::min(cfg.a_max_step, dist);
}

Vector ib_make_obs(double v, double g, double h, const IbConfig& cfg) {
  Vector obs(6);
  obs << cfg.setpoint, v, g, h, fatigue_of(v, g, cfg),
      consumption_of(h, 0.0, cfg);
  return obs;
}

IbStep ib_surrogate_step(const Vector& obs, const Eigen::Vector3d& a, Rng& rng,
                         const IbConfig& cfg) {
  require(obs.size() == 6, "ib_surrogate_step: observation must have size 6");
  require((a.array().abs() <= 1.0 + 1e-12).all(),
          "ib_surrogate_step: action components must lie in [-1, 1]");
  const double v = std::clamp(obs[1] + cfg.steering[0] * a[0], 0.0, 100.0);
  const double g = std::clamp(obs[2] + cfg.steering[1] * a[1], 0.0, 100.0);
  const double h = std::clamp(obs[3] + cfg.steering[2] * a[2], 0.0, 100.0);
  const double fatigue = fatigue_of(v, g, cfg);
  const double consumption = consumption_of(h, a.cwiseAbs().sum(), cfg);

  IbStep step;
  step.obs.resize(6);
  step.obs << obs[0], v, g, h, fatigue, consumption;
  step.cost = cfg.fatigue_weight * fatigue + consumption;
  if (cfg.cost_noise) {
    std::normal_distribution<double> noise(0.0, cfg.cost_noise_std);
    step.cost += noise(rng);
  }
  return step;
}

Eigen::Vector3d medium_policy_action(const Vector& obs, Rng& rng,
                                     const IbConfig& cfg) {
  require(obs.size() == 6, "medium_policy_action: observation must have size 6");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg.medium_random_prob) {
    std::uniform_real_distribution<double> act(-1.0, 1.0);
    return Eigen::Vector3d(act(rng), act(rng), act(rng));
  }
  Eigen::Vector3d a;
  for (int i = 0; i < 3; ++i)
    a[i] = std::clamp((50.0 - obs[1 + i]) / cfg.steering[i], -1.0, 1.0);
  return a;
}

Vector history_state(const std::vector<Vector>& observations, int t,
                     int window) {
  require(t >= 0 && t < static_cast<int>(observations.size()),
          "history_state: time index out of range");
  require(window >= 1, "history_state: window must be >= 1");
  const Eigen::Index d = observations.front().size();
  Vector state(window * d);
  for (int k = 0; k < window; ++k) {
    const int src = std::max(0, t - window + 1 + k);
    state.segment(static_cast<Eigen::Index>(k) * d, d) = observations[src];
  }
  return state;
}

int Batch::episode_count() const {
  std::set<int> ids;
  for (const Transition& tr : transitions) ids.insert(tr.episode);
  return static_cast<int>(ids.size());
}

double Batch::mean_episode_cost() const {
  if (transitions.empty()) return 0.0;
  double total = 0.0;
  for (const Transition& tr : transitions) total -= tr.reward;
  return total / episode_count();
}

Environment Environment::grid2d(GridConfig cfg) {
  Environment env;
  env.kind_ = EnvKind::kGrid2d;
  env.grid_ = cfg;
  env.spec_ = make_grid_spec(cfg);
  return env;
}

Environment Environment::ib_surrogate(IbConfig cfg) {
  Environment env;
  env.kind_ = EnvKind::kIbSurrogate;
  env.ib_ = cfg;
  env.spec_ = make_ib_spec(cfg);
  return env;
}

Environment Environment::from_id(const std::string& id) {
  if (id == "grid2d") return grid2d();
  if (id == "ib_surrogate") return ib_surrogate();
  throw ContractError("unknown environment id: " + id);
}

void Environment::refresh_spec() {
  spec_ = kind_ == EnvKind::kGrid2d ? make_grid_spec(grid_)
                                    : make_ib_spec(ib_);
}

int Environment::episode_steps() const {
  return kind_ == EnvKind::kGrid2d ? grid_.episode_steps : ib_.episode_steps;
}

Vector Environment::reset(Rng& rng) const {
  if (kind_ == EnvKind::kGrid2d) return reset_in(grid_.lo, grid_.hi, rng);
  return reset_in(ib_.start_lo, ib_.start_hi, rng);
}

Vector Environment::reset_in(double lo, double hi, Rng& rng) const {
  std::uniform_real_distribution<double> dist(lo, hi);
  if (kind_ == EnvKind::kGrid2d) {
    Vector obs(2);
    obs << dist(rng), dist(rng);
    return obs;
  }
  const double v = dist(rng);
  const double g = dist(rng);
  const double h = dist(rng);
  return ib_make_obs(v, g, h, ib_);
}

Environment::Step Environment::step(const Vector& obs, const Vector& action,
                                    Rng& rng) const {
  Step out;
  if (kind_ == EnvKind::kGrid2d) {
    require(obs.size() == 2 && action.size() == 2,
            "grid2d step: dimension mismatch");
    Eigen::Vector2d next = grid2d_transition(obs, action, grid_);
    out.next_obs = next;
    out.reward = grid2d_reward(next, grid_);
    return out;
  }
  require(action.size() == 3, "ib step: action must have size 3");
  IbStep step = ib_surrogate_step(obs, Eigen::Vector3d(action), rng, ib_);
  out.next_obs = step.obs;
  out.reward = -step.cost;
  return out;
}

Vector Environment::behavior_action(const Vector& obs, Rng& rng) const {
  if (kind_ == EnvKind::kGrid2d)
    return grid2d_behavior_action(Eigen::Vector2d(obs), rng, grid_);
  return medium_policy_action(obs, rng, ib_);
}

Batch collect_batch(const Environment& env, CollectPolicy policy, int episodes,
                    int horizon, std::uint64_t seed, int window,
                    std::optional<std::pair<double, double>> bound) {
  require(episodes >= 1 && horizon >= 1,
          "collect_batch: episodes and horizon must be >= 1");
  const EnvSpec& spec = env.spec();

  Batch batch;
  batch.env_id = spec.id;
  batch.obs_dim = spec.obs_dim;
  batch.action_dim = spec.action_dim;
  batch.window = window;
  batch.transitions.reserve(static_cast<std::size_t>(episodes) * horizon);

  std::optional<safety::ConstrainedPolicy> clip;
  if (bound.has_value()) {
    safety::ConstrainedPolicy c;
    c.state_lo = bound->first;
    c.state_hi = bound->second;
    c.action_lo = spec.action_lo;
    c.action_hi = spec.action_hi;
    c.effect = spec.effect;
    clip = c;
  }

  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(ep));
    Vector obs = bound.has_value()
                     ? env.reset_in(bound->first, bound->second, rng)
                     : env.reset(rng);
    std::vector<Vector> observed{obs};
    for (int t = 0; t < horizon; ++t) {
      Vector action(spec.action_dim);
      if (policy == CollectPolicy::kBehavior) {
        action = env.behavior_action(obs, rng);
      } else {
        for (int i = 0; i < spec.action_dim; ++i) {
          std::uniform_real_distribution<double> dist(spec.action_lo[i],
                                                      spec.action_hi[i]);
          action[i] = dist(rng);
        }
      }
      if (clip.has_value()) {
        Vector values(spec.constrained_dims.size());
        for (std::size_t i = 0; i < spec.constrained_dims.size(); ++i)
          values[i] = obs[spec.constrained_dims[i]];
        safety::ActionRange range = safety::valid_action_range(values, *clip);
        action = action.cwiseMax(range.lo).cwiseMin(range.hi);
      }

      Environment::Step step = env.step(obs, action, rng);
      Transition tr;
      tr.state = history_state(observed, t, window);
      tr.action = action;
      tr.reward = step.reward;
      tr.next_obs = step.next_obs;
      tr.episode = ep;
      tr.t = t;
      tr.iteration = 0;
      tr.policy = -1;
      batch.transitions.push_back(std::move(tr));

      obs = step.next_obs;
      observed.push_back(obs);
    }
  }
  return batch;
}

}  // namespace ibrl::envs
