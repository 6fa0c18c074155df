#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibrl/common.hpp"

namespace ibrl::envs {

// 2D navigation world on [0, 10]^2 with additive clipped dynamics and a
// Gaussian position reward. The data-collecting behavior policy steps toward
// the nearer of two goals with occasional uniform random actions.
struct GridConfig {
  double a_max_step = 0.5;
  double lo = 0.0;
  double hi = 10.0;
  Eigen::Vector2d goal_a{2.5, 2.5};
  Eigen::Vector2d goal_b{7.5, 7.5};
  Eigen::Vector2d reward_mean{3.0, 6.0};
  Eigen::Vector2d reward_std{1.5, 1.5};
  double random_action_prob = 0.1;
  int episode_steps = 30;
};

// Industrial-control surrogate. Observations are
// (setpoint, velocity, gain, shift, fatigue, consumption); velocity, gain and
// shift respond linearly to the three actions and stay inside [0, 100].
// Cost has a unique noise-free optimum at (v, g, h) =
// (setpoint-10, setpoint+10, 100-setpoint), away from the medium policy's
// target point.
struct IbConfig {
  double setpoint = 50.0;
  Eigen::Vector3d steering{1.0, 10.0, 5.75};
  double fatigue_weight = 3.0;
  double action_cost = 0.05;
  double cost_noise_std = 0.05;
  bool cost_noise = true;
  double start_lo = 30.0;
  double start_hi = 70.0;
  double medium_random_prob = 1.0 / 3.0;
  int episode_steps = 200;
};

// Static facts a training stack needs about an environment: dimensions,
// normalization ranges, action bounds and which observation dimensions the
// actions drive linearly.
struct EnvSpec {
  std::string id;
  int obs_dim = 0;
  int action_dim = 0;
  Vector obs_lo;
  Vector obs_hi;
  Vector action_lo;
  Vector action_hi;
  std::vector<int> constrained_dims;  // obs indices, one per action dim
  Vector effect;                      // linear effect per constrained dim

  Vector normalize_obs(const Vector& obs) const;
  Vector denormalize_obs(const Vector& normalized) const;
  Vector normalize_history(const Vector& history) const;
  Vector normalize_action(const Vector& action) const;
};

// -- grid world primitives --
Eigen::Vector2d grid2d_transition(const Eigen::Vector2d& s,
                                  const Eigen::Vector2d& a,
                                  const GridConfig& cfg = {});
double grid2d_reward(const Eigen::Vector2d& s, const GridConfig& cfg = {});
Eigen::Vector2d grid2d_behavior_action(const Eigen::Vector2d& s, Rng& rng,
                                       const GridConfig& cfg = {});

// -- surrogate primitives --
struct IbStep {
  Vector obs;
  double cost = 0.0;
};
IbStep ib_surrogate_step(const Vector& obs, const Eigen::Vector3d& a, Rng& rng,
                         const IbConfig& cfg = {});
Eigen::Vector3d medium_policy_action(const Vector& obs, Rng& rng,
                                     const IbConfig& cfg = {});
// Observation with fatigue/consumption consistent with (v, g, h).
Vector ib_make_obs(double v, double g, double h, const IbConfig& cfg = {});

// Concatenation of the `window` most recent observations up to time t,
// front-padded by repeating the first observation.
Vector history_state(const std::vector<Vector>& observations, int t,
                     int window);

// One recorded interaction. States use the history-window encoding in raw
// (unnormalized) units; rewards are the negated cost for the surrogate.
struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_obs;
  int episode = 0;
  int t = 0;
  int iteration = 0;
  int policy = -1;
};

struct Batch {
  std::string env_id;
  int obs_dim = 0;
  int action_dim = 0;
  int window = 1;
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
  int episode_count() const;
  double mean_episode_cost() const;
};

enum class EnvKind { kGrid2d, kIbSurrogate };

// Value-semantic environment facade; transitions are pure functions of the
// observation, so episodes only need an observation and a seeded stream.
class Environment {
 public:
  static Environment grid2d(GridConfig cfg = {});
  static Environment ib_surrogate(IbConfig cfg = {});
  static Environment from_id(const std::string& id);

  EnvKind kind() const { return kind_; }
  const EnvSpec& spec() const { return spec_; }
  const GridConfig& grid() const { return grid_; }
  const IbConfig& ib() const { return ib_; }
  GridConfig& grid() { return grid_; }
  IbConfig& ib() { return ib_; }
  // Re-derive the spec after mutating configs.
  void refresh_spec();

  int episode_steps() const;
  Vector reset(Rng& rng) const;
  Vector reset_in(double lo, double hi, Rng& rng) const;

  struct Step {
    Vector next_obs;
    double reward = 0.0;  // negated cost for the surrogate
  };
  Step step(const Vector& obs, const Vector& action, Rng& rng) const;

  // Data-collection policy: nearest-goal steps for the grid, the medium
  // policy for the surrogate.
  Vector behavior_action(const Vector& obs, Rng& rng) const;

 private:
  EnvKind kind_ = EnvKind::kGrid2d;
  GridConfig grid_;
  IbConfig ib_;
  EnvSpec spec_;
};

enum class CollectPolicy { kBehavior, kRandom };

// Seeded batch collection. When `bound` is given, start states are drawn
// inside it and every action is clipped into the admissible range that keeps
// the linearly driven dimensions inside the bound.
Batch collect_batch(const Environment& env, CollectPolicy policy, int episodes,
                    int horizon, std::uint64_t seed, int window,
                    std::optional<std::pair<double, double>> bound = {});

}  // namespace ibrl::envs
