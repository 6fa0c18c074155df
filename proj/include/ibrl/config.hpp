#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibrl/loop.hpp"

namespace ibrl::harness {

// Parse or validation failure; message lists every violation found.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full experiment description as read from a config document. Every value
// has a documented default; seeds must be given explicitly (file or CLI).
struct ExperimentConfig {
  // [experiment]
  std::string env = "grid2d";
  int iterations = 4;
  int repetitions = 3;
  std::optional<std::uint64_t> seed;
  std::string output_dir = ".";

  // [train]
  int policies = 10;
  int horizon = 100;
  double gamma = 1.0;
  int window = 15;
  int start_states = 32;
  int holdout_states = 32;
  int max_epochs = 500;
  int patience = 20;
  double lr = 1e-3;
  std::vector<int> policy_hidden{50, 50};

  // [models]
  std::vector<int> model_hidden{50, 50};
  int model_epochs = 200;
  int model_minibatch = 64;
  double model_lr = 1e-3;
  double val_split = 0.1;
  int model_patience = 20;
  bool predict_delta = true;

  // [safety]
  std::string safety = "soft_constraint";
  double lambda = 0.4;
  double alpha_s = 20.0;
  double delta = 0.5;
  double bound_lo = 30.0;
  double bound_hi = 70.0;

  // [diversity]
  std::string measure = "min_lsed";
  std::string norm = "l2";
  double alpha_d = 0.0;
  bool exclude_first = true;
  bool pair_average = false;

  // [collect]
  std::string collect_policy;  // "behavior" | "random"; default per env
  int collect_episodes = 5;
  int collect_horizon = 200;
  bool collect_bounded = false;

  // [deploy]
  int deploy_steps = 200;
  int eval_episodes = 5;

  // [env.grid2d] / [env.ib_surrogate]
  envs::GridConfig grid;
  envs::IbConfig ib;
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Materialize the runtime pieces. `seed` must have been resolved by now.
search::RunnerConfig make_runner(const ExperimentConfig& cfg);
envs::Environment make_environment(const ExperimentConfig& cfg);
envs::CollectPolicy collect_policy_of(const ExperimentConfig& cfg);
std::optional<std::pair<double, double>> collect_bound_of(
    const ExperimentConfig& cfg);

}  // namespace ibrl::harness
