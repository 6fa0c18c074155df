#include "ibrl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ibrl::harness {

namespace {

// Minimal TOML-style subset: [section] headers, `key = value` lines,
// values are bools, numbers, quoted strings or flat numeric arrays,
// '#' starts a comment. Strict: duplicate and unknown keys are errors.
struct RawValue {
  std::string text;
  int line = 0;
};

using KeyMap = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

KeyMap tokenize(const std::string& text, std::vector<std::string>* errors) {
  KeyMap map;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors->push_back("line " + std::to_string(line_no) +
                          ": unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors->push_back("line " + std::to_string(line_no) +
                        ": expected key = value");
      continue;
    }
    const std::string key =
        (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    if (map.count(key) != 0) {
      errors->push_back("line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
      continue;
    }
    map[key] = RawValue{trim(line.substr(eq + 1)), line_no};
  }
  return map;
}

class Reader {
 public:
  Reader(KeyMap map, std::vector<std::string>* errors)
      : map_(std::move(map)), errors_(errors) {}

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  template <typename F>
  void get(const std::string& key, F&& parse) {
    auto it = map_.find(key);
    if (it == map_.end()) return;
    used_.insert(key);
    parse(it->second);
  }

  void fail(const RawValue& v, const std::string& message) {
    errors_->push_back("line " + std::to_string(v.line) + ": " + message);
  }

  void finish() {
    for (const auto& [key, value] : map_) {
      if (used_.count(key) == 0)
        errors_->push_back("line " + std::to_string(value.line) +
                           ": unknown key '" + key + "'");
    }
  }

 private:
  KeyMap map_;
  std::set<std::string> used_;
  std::vector<std::string>* errors_;
};

bool parse_double(const std::string& text, double* out) {
  try {
    std::size_t used = 0;
    *out = std::stod(text, &used);
    return used == text.size() && std::isfinite(*out);
  } catch (...) {
    return false;
  }
}

bool parse_int(const std::string& text, long long* out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto result = std::from_chars(begin, end, *out);
  return result.ec == std::errc() && result.ptr == end;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::string> errors;
  Reader reader(tokenize(text, &errors), &errors);
  ExperimentConfig cfg;

  auto read_string = [&](const std::string& key, std::string* out) {
    reader.get(key, [&](const RawValue& v) {
      std::string s = v.text;
      if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        s = s.substr(1, s.size() - 2);
      *out = s;
    });
  };
  auto read_double = [&](const std::string& key, double* out) {
    reader.get(key, [&](const RawValue& v) {
      double d = 0.0;
      if (parse_double(v.text, &d))
        *out = d;
      else
        reader.fail(v, "key '" + key + "' expects a number");
    });
  };
  auto read_int = [&](const std::string& key, int* out) {
    reader.get(key, [&](const RawValue& v) {
      long long i = 0;
      if (parse_int(v.text, &i))
        *out = static_cast<int>(i);
      else
        reader.fail(v, "key '" + key + "' expects an integer");
    });
  };
  auto read_bool = [&](const std::string& key, bool* out) {
    reader.get(key, [&](const RawValue& v) {
      if (v.text == "true")
        *out = true;
      else if (v.text == "false")
        *out = false;
      else
        reader.fail(v, "key '" + key + "' expects true or false");
    });
  };
  auto read_int_list = [&](const std::string& key, std::vector<int>* out) {
    reader.get(key, [&](const RawValue& v) {
      std::string s = v.text;
      if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
        reader.fail(v, "key '" + key + "' expects [n, n, ...]");
        return;
      }
      s = s.substr(1, s.size() - 2);
      std::vector<int> values;
      std::istringstream items(s);
      std::string item;
      while (std::getline(items, item, ',')) {
        long long i = 0;
        if (!parse_int(trim(item), &i)) {
          reader.fail(v, "key '" + key + "' expects [n, n, ...]");
          return;
        }
        values.push_back(static_cast<int>(i));
      }
      *out = values;
    });
  };

  read_string("experiment.env", &cfg.env);
  read_int("experiment.iterations", &cfg.iterations);
  read_int("experiment.repetitions", &cfg.repetitions);
  reader.get("experiment.seed", [&](const RawValue& v) {
    long long i = 0;
    if (parse_int(v.text, &i) && i >= 0)
      cfg.seed = static_cast<std::uint64_t>(i);
    else
      reader.fail(v, "key 'experiment.seed' expects a non-negative integer");
  });
  read_string("experiment.output_dir", &cfg.output_dir);

  read_int("train.policies", &cfg.policies);
  read_int("train.horizon", &cfg.horizon);
  read_double("train.gamma", &cfg.gamma);
  read_int("train.window", &cfg.window);
  read_int("train.start_states", &cfg.start_states);
  read_int("train.holdout_states", &cfg.holdout_states);
  read_int("train.max_epochs", &cfg.max_epochs);
  read_int("train.patience", &cfg.patience);
  read_double("train.lr", &cfg.lr);
  read_int_list("train.policy_hidden", &cfg.policy_hidden);

  read_int_list("models.hidden", &cfg.model_hidden);
  read_int("models.epochs", &cfg.model_epochs);
  read_int("models.minibatch", &cfg.model_minibatch);
  read_double("models.lr", &cfg.model_lr);
  read_double("models.val_split", &cfg.val_split);
  read_int("models.patience", &cfg.model_patience);
  read_bool("models.predict_delta", &cfg.predict_delta);

  read_string("safety.variant", &cfg.safety);
  read_double("safety.lambda", &cfg.lambda);
  read_double("safety.alpha_s", &cfg.alpha_s);
  read_double("safety.delta", &cfg.delta);
  read_double("safety.bound_lo", &cfg.bound_lo);
  read_double("safety.bound_hi", &cfg.bound_hi);

  read_string("diversity.measure", &cfg.measure);
  read_string("diversity.norm", &cfg.norm);
  read_double("diversity.alpha_d", &cfg.alpha_d);
  read_bool("diversity.exclude_first", &cfg.exclude_first);
  read_bool("diversity.pair_average", &cfg.pair_average);

  read_string("collect.policy", &cfg.collect_policy);
  read_int("collect.episodes", &cfg.collect_episodes);
  read_int("collect.horizon", &cfg.collect_horizon);
  read_bool("collect.bounded", &cfg.collect_bounded);

  read_int("deploy.steps", &cfg.deploy_steps);
  read_int("deploy.eval_episodes", &cfg.eval_episodes);

  read_double("env.grid2d.a_max_step", &cfg.grid.a_max_step);
  read_int("env.grid2d.episode_steps", &cfg.grid.episode_steps);
  read_double("env.grid2d.random_action_prob",
              &cfg.grid.random_action_prob);

  read_double("env.ib_surrogate.setpoint", &cfg.ib.setpoint);
  read_double("env.ib_surrogate.steer_v", &cfg.ib.steering[0]);
  read_double("env.ib_surrogate.steer_g", &cfg.ib.steering[1]);
  read_double("env.ib_surrogate.steer_h", &cfg.ib.steering[2]);
  read_double("env.ib_surrogate.cost_noise_std", &cfg.ib.cost_noise_std);
  read_bool("env.ib_surrogate.cost_noise", &cfg.ib.cost_noise);
  read_double("env.ib_surrogate.start_lo", &cfg.ib.start_lo);
  read_double("env.ib_surrogate.start_hi", &cfg.ib.start_hi);
  read_int("env.ib_surrogate.episode_steps", &cfg.ib.episode_steps);

  reader.finish();

  // Range validation; every violation is reported.
  auto check = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };
  check(cfg.env == "grid2d" || cfg.env == "ib_surrogate",
        "experiment.env must be grid2d or ib_surrogate");
  check(cfg.iterations >= 1, "experiment.iterations must be >= 1");
  check(cfg.repetitions >= 1, "experiment.repetitions must be >= 1");
  check(cfg.policies >= 1, "train.policies must be >= 1");
  check(cfg.horizon >= 1, "train.horizon must be >= 1");
  check(cfg.gamma >= 0.0 && cfg.gamma <= 1.0,
        "train.gamma must lie in [0, 1]");
  check(cfg.window >= 1, "train.window must be >= 1");
  check(cfg.start_states >= 1, "train.start_states must be >= 1");
  check(cfg.holdout_states >= 1, "train.holdout_states must be >= 1");
  check(cfg.max_epochs >= 0, "train.max_epochs must be >= 0");
  check(cfg.patience >= 1, "train.patience must be >= 1");
  check(cfg.lr > 0.0, "train.lr must be > 0");
  check(!cfg.policy_hidden.empty(), "train.policy_hidden must be nonempty");
  check(!cfg.model_hidden.empty(), "models.hidden must be nonempty");
  check(cfg.model_epochs >= 0, "models.epochs must be >= 0");
  check(cfg.model_minibatch >= 1, "models.minibatch must be >= 1");
  check(cfg.model_lr > 0.0, "models.lr must be > 0");
  check(cfg.val_split >= 0.0 && cfg.val_split < 1.0,
        "models.val_split must lie in [0, 1)");
  check(cfg.safety == "objective" || cfg.safety == "soft_constraint" ||
            cfg.safety == "constrained_policy",
        "safety.variant must be objective, soft_constraint or "
        "constrained_policy");
  check(cfg.lambda >= 0.0 && cfg.lambda <= 1.0,
        "safety.lambda must lie in [0, 1]");
  check(cfg.alpha_s >= 0.0, "safety.alpha_s must be >= 0");
  check(cfg.delta >= 0.0 && cfg.delta <= 1.0,
        "safety.delta must lie in [0, 1]");
  check(cfg.bound_lo < cfg.bound_hi, "safety bounds must be ordered");
  check(cfg.measure == "lsed" || cfg.measure == "min_lsed",
        "diversity.measure must be lsed or min_lsed");
  check(cfg.norm == "l1" || cfg.norm == "l2",
        "diversity.norm must be l1 or l2");
  check(cfg.alpha_d >= 0.0 && std::isfinite(cfg.alpha_d),
        "diversity.alpha_d must be finite and >= 0");
  check(cfg.collect_policy.empty() || cfg.collect_policy == "behavior" ||
            cfg.collect_policy == "random",
        "collect.policy must be behavior or random");
  check(cfg.collect_episodes >= 1, "collect.episodes must be >= 1");
  check(cfg.collect_horizon >= 1, "collect.horizon must be >= 1");
  check(cfg.deploy_steps >= 1, "deploy.steps must be >= 1");
  check(cfg.eval_episodes >= 1, "deploy.eval_episodes must be >= 1");
  check(cfg.grid.a_max_step > 0.0, "env.grid2d.a_max_step must be > 0");
  check(cfg.grid.episode_steps >= 1,
        "env.grid2d.episode_steps must be >= 1");
  check(cfg.grid.random_action_prob >= 0.0 &&
            cfg.grid.random_action_prob <= 1.0,
        "env.grid2d.random_action_prob must lie in [0, 1]");
  check(cfg.ib.cost_noise_std >= 0.0,
        "env.ib_surrogate.cost_noise_std must be >= 0");
  check(cfg.ib.start_lo < cfg.ib.start_hi,
        "env.ib_surrogate start range must be ordered");
  check(cfg.ib.episode_steps >= 1,
        "env.ib_surrogate.episode_steps must be >= 1");

  if (!errors.empty()) {
    std::string message = "invalid config:";
    for (const std::string& e : errors) message += "\n  " + e;
    throw ConfigError(message);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

envs::Environment make_environment(const ExperimentConfig& cfg) {
  return cfg.env == "grid2d" ? envs::Environment::grid2d(cfg.grid)
                             : envs::Environment::ib_surrogate(cfg.ib);
}

envs::CollectPolicy collect_policy_of(const ExperimentConfig& cfg) {
  if (!cfg.collect_policy.empty())
    return cfg.collect_policy == "random" ? envs::CollectPolicy::kRandom
                                          : envs::CollectPolicy::kBehavior;
  // Default collection: nearest-goal behavior on the grid, uniform random
  // actions on the surrogate.
  return cfg.env == "grid2d" ? envs::CollectPolicy::kBehavior
                             : envs::CollectPolicy::kRandom;
}

std::optional<std::pair<double, double>> collect_bound_of(
    const ExperimentConfig& cfg) {
  if (!cfg.collect_bounded) return std::nullopt;
  return std::make_pair(cfg.bound_lo, cfg.bound_hi);
}

search::RunnerConfig make_runner(const ExperimentConfig& cfg) {
  if (!cfg.seed.has_value())
    throw ConfigError("no seed given: set experiment.seed or pass --seed");

  search::RunnerConfig runner;
  runner.env = make_environment(cfg);
  runner.window = cfg.window;
  runner.policies = cfg.policies;
  runner.policy_hidden = cfg.policy_hidden;
  runner.model_hidden = cfg.model_hidden;
  runner.transition_output = cfg.predict_delta
                                 ? rollout::TransitionOutput::kDelta
                                 : rollout::TransitionOutput::kAbsolute;
  runner.deploy_steps = cfg.deploy_steps;
  runner.eval_episodes = cfg.eval_episodes;
  runner.seed = *cfg.seed;

  if (cfg.safety == "objective") {
    runner.safety = safety::Objective{cfg.lambda};
  } else if (cfg.safety == "soft_constraint") {
    runner.safety = safety::SoftConstraint{cfg.alpha_s, cfg.delta};
  } else {
    safety::ConstrainedPolicy c;
    c.state_lo = cfg.bound_lo;
    c.state_hi = cfg.bound_hi;
    c.action_lo = runner.env.spec().action_lo;
    c.action_hi = runner.env.spec().action_hi;
    c.effect = runner.env.spec().effect;
    runner.safety = c;
  }
  safety::validate(runner.safety);

  runner.diversity.measure = cfg.measure == "lsed"
                                 ? diversity::Measure::kLsed
                                 : diversity::Measure::kMinLsed;
  runner.diversity.norm =
      cfg.norm == "l1" ? diversity::Norm::kL1 : diversity::Norm::kL2;
  runner.diversity.alpha_d = cfg.alpha_d;
  runner.diversity.exclude_first = cfg.exclude_first;
  runner.diversity.pair_average = cfg.pair_average;

  runner.plan.horizon = cfg.horizon;
  runner.plan.gamma = cfg.gamma;
  runner.plan.policy_count = cfg.policies;
  runner.plan.start_states = cfg.start_states;

  runner.train.max_epochs = cfg.max_epochs;
  runner.train.patience = cfg.patience;
  runner.train.minibatch_starts = cfg.start_states;
  runner.train.holdout_starts = cfg.holdout_states;
  runner.train.lr = cfg.lr;

  runner.model_fit.epochs = cfg.model_epochs;
  runner.model_fit.minibatch = cfg.model_minibatch;
  runner.model_fit.lr = cfg.model_lr;
  runner.model_fit.val_split = cfg.val_split;
  runner.model_fit.patience = cfg.model_patience;
  return runner;
}

}  // namespace ibrl::harness
