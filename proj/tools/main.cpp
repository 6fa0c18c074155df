#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ibrl/config.hpp"
#include "ibrl/io.hpp"

namespace fs = std::filesystem;
using namespace ibrl;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const harness::ExperimentConfig* cfg) {
  if (flag.has_value()) return *flag;
  if (cfg != nullptr && cfg->seed.has_value()) return *cfg->seed;
  throw harness::ConfigError(
      "no seed given: pass --seed or set experiment.seed in the config");
}

envs::Environment env_for(const std::string& id,
                          const harness::ExperimentConfig* cfg) {
  if (cfg != nullptr && cfg->env == id) return harness::make_environment(*cfg);
  return envs::Environment::from_id(id);
}

int run_collect(const std::string& env_id, const std::string& policy,
                int episodes, int horizon, int window,
                const std::vector<double>& bound, std::uint64_t seed,
                const std::string& out) {
  envs::Environment env = envs::Environment::from_id(env_id);
  envs::CollectPolicy collect = policy == "behavior"
                                    ? envs::CollectPolicy::kBehavior
                                    : envs::CollectPolicy::kRandom;
  std::optional<std::pair<double, double>> bounds;
  if (!bound.empty()) {
    require(bound.size() == 2, "--bound expects two values");
    bounds = std::make_pair(bound[0], bound[1]);
  }
  envs::Batch batch =
      envs::collect_batch(env, collect, episodes, horizon, seed, window,
                          bounds);
  harness::save_batch(batch, out);
  std::cout << "wrote " << batch.size() << " transitions to " << out << '\n';
  return 0;
}

void save_checkpoints(const search::PolicyEnsemble& ensemble,
                      const search::ModelSet& models, const fs::path& dir,
                      const std::string& prefix) {
  for (int k = 0; k < ensemble.size(); ++k)
    nets::save_network(ensemble.members[k],
                       (dir / (prefix + "_policy" + std::to_string(k) +
                               ".json"))
                           .string());
  nets::save_network(models.transition,
                     (dir / (prefix + "_transition.json")).string());
  nets::save_network(models.reward, (dir / (prefix + "_reward.json")).string());
  if (models.behavior.has_value())
    nets::save_network(*models.behavior,
                       (dir / (prefix + "_behavior.json")).string());
}

int run_loop(const std::string& config_path,
             const std::optional<std::uint64_t>& seed_flag,
             const std::string& out_flag) {
  harness::ExperimentConfig cfg = harness::parse_config(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag, &cfg);
  const fs::path out_dir = out_flag.empty() ? cfg.output_dir : out_flag;
  fs::create_directories(out_dir);

  std::vector<std::pair<int, std::vector<search::IterationReport>>> runs;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    harness::ExperimentConfig rep_cfg = cfg;
    rep_cfg.seed = cfg.repetitions == 1 ? seed : mix_seed(seed, 9000 + rep);
    search::RunnerConfig runner = harness::make_runner(rep_cfg);

    envs::Batch batch = envs::collect_batch(
        runner.env, harness::collect_policy_of(rep_cfg),
        rep_cfg.collect_episodes, rep_cfg.collect_horizon,
        mix_seed(*rep_cfg.seed, 1), rep_cfg.window,
        harness::collect_bound_of(rep_cfg));
    std::cout << "rep " << rep << ": initial batch " << batch.size()
              << " transitions, mean episode cost "
              << batch.mean_episode_cost() << '\n';

    std::vector<search::IterationReport> reports;
    search::PolicyEnsemble ensemble;
    search::ModelSet models;
    for (int it = 1; it <= rep_cfg.iterations; ++it) {
      search::IterationReport report =
          search::run_iteration(batch, runner, it, &ensemble, &models);
      std::cout << "rep " << rep << " iteration " << it << ": eval cost "
                << report.eval_cost << ", batch " << report.batch_size
                << ", epochs " << report.epochs_run << '\n';
      reports.push_back(std::move(report));
    }
    harness::write_report(
        reports,
        (out_dir / ("report_rep" + std::to_string(rep) + ".csv")).string());
    harness::save_batch(
        batch,
        (out_dir / ("batch_rep" + std::to_string(rep) + ".json")).string());
    save_checkpoints(ensemble, models, out_dir,
                     "rep" + std::to_string(rep));
    runs.emplace_back(rep, std::move(reports));
  }
  harness::merge_reports(runs, (out_dir / "report.csv").string());
  std::cout << "wrote " << (out_dir / "report.csv").string() << '\n';
  return 0;
}

int run_train(const std::string& config_path,
              const std::optional<std::uint64_t>& seed_flag,
              const std::string& batch_path, const std::string& out_flag,
              int iteration_flag) {
  harness::ExperimentConfig cfg = harness::parse_config(config_path);
  cfg.seed = resolve_seed(seed_flag, &cfg);
  const fs::path out_dir = out_flag.empty() ? cfg.output_dir : out_flag;
  fs::create_directories(out_dir);

  envs::Batch batch = harness::load_batch(batch_path);
  require(batch.env_id == cfg.env,
          "train: batch was collected on " + batch.env_id +
              " but the config selects " + cfg.env);
  require(batch.window == cfg.window,
          "train: batch window does not match train.window");
  int iteration = iteration_flag;
  if (iteration < 0) {
    iteration = 1;
    for (const envs::Transition& tr : batch.transitions)
      iteration = std::max(iteration, tr.iteration + 1);
  }

  search::RunnerConfig runner = harness::make_runner(cfg);
  search::PolicyEnsemble ensemble;
  search::ModelSet models;
  search::IterationReport report =
      search::run_iteration(batch, runner, iteration, &ensemble, &models);
  harness::write_report({report}, (out_dir / "report.csv").string());
  harness::save_batch(batch, (out_dir / "batch.json").string());
  save_checkpoints(ensemble, models, out_dir,
                   "iter" + std::to_string(iteration));
  std::cout << "iteration " << iteration << ": eval cost " << report.eval_cost
            << ", batch " << report.batch_size << '\n';
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& env_id,
             int episodes, int horizon, int window,
             const std::vector<double>& bound, std::uint64_t seed) {
  envs::Environment env = envs::Environment::from_id(env_id);
  nets::Network policy = nets::load_network(checkpoint);

  rollout::RolloutContext ctx;
  ctx.spec = env.spec();
  ctx.window = window;
  safety::ConstrainedPolicy constrained;
  if (!bound.empty()) {
    require(bound.size() == 2, "--bound expects two values");
    constrained.state_lo = bound[0];
    constrained.state_hi = bound[1];
    constrained.action_lo = env.spec().action_lo;
    constrained.action_hi = env.spec().action_hi;
    constrained.effect = env.spec().effect;
    ctx.constrained = &constrained;
  }
  const double cost = search::evaluate_policy(
      search::deploy_policy(policy, ctx, nullptr), env, episodes, horizon,
      seed, window);
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.12g", cost);
  std::cout << "mean episode cost " << buffer << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterative batch policy search experiments"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed_flag;
  std::string config_path;
  std::string out_path;

  // collect
  auto* collect = app.add_subcommand(
      "collect", "record a batch with a data-collection policy");
  std::string c_env = "ib_surrogate";
  std::string c_policy;
  int c_episodes = 5;
  int c_horizon = 200;
  int c_window = 15;
  std::vector<double> c_bound;
  std::string c_out = "batch.json";
  collect->add_option("--env", c_env, "grid2d or ib_surrogate");
  collect->add_option("--policy", c_policy, "behavior or random");
  collect->add_option("--episodes", c_episodes, "episodes to record");
  collect->add_option("--horizon", c_horizon, "steps per episode");
  collect->add_option("--window", c_window, "history window length");
  collect->add_option("--bound", c_bound,
                      "keep linearly driven state dims inside [LO, HI]")
      ->expected(2);
  collect->add_option("--seed", seed_flag, "rng seed (required)");
  collect->add_option("--out", c_out, "output batch file");

  // train
  auto* train = app.add_subcommand("train", "run one batch iteration");
  std::string t_batch;
  int t_iteration = -1;
  train->add_option("--config", config_path, "experiment config")->required();
  train->add_option("--batch", t_batch, "accumulated batch file")->required();
  train->add_option("--seed", seed_flag, "rng seed");
  train->add_option("--out", out_path, "output directory");
  train->add_option("--iteration", t_iteration,
                    "iteration index (default: next after the batch)");

  // loop
  auto* loop = app.add_subcommand(
      "loop", "full iterative run: collect, then train/deploy/append");
  loop->add_option("--config", config_path, "experiment config")->required();
  loop->add_option("--seed", seed_flag, "rng seed");
  loop->add_option("--out", out_path, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
  std::string e_checkpoint;
  std::string e_env = "ib_surrogate";
  int e_episodes = 5;
  int e_horizon = 200;
  int e_window = 15;
  std::vector<double> e_bound;
  eval->add_option("--checkpoint", e_checkpoint, "policy checkpoint")
      ->required();
  eval->add_option("--env", e_env, "grid2d or ib_surrogate");
  eval->add_option("--episodes", e_episodes, "evaluation episodes");
  eval->add_option("--horizon", e_horizon, "steps per episode");
  eval->add_option("--window", e_window, "history window length");
  eval->add_option("--bound", e_bound, "wrap as constrained policy in [LO, HI]")
      ->expected(2);
  eval->add_option("--seed", seed_flag, "rng seed (required)");

  // plotdata
  auto* plotdata =
      app.add_subcommand("plotdata", "emit plot-ready data files");
  plotdata->require_subcommand(1);
  auto* pmap = plotdata->add_subcommand(
      "policy-map", "(x, y, action angle) over a state grid");
  std::string p_checkpoint;
  int p_grid = 20;
  int p_window = 1;
  std::string p_out = "policy_map.csv";
  pmap->add_option("--checkpoint", p_checkpoint, "policy checkpoint")
      ->required();
  pmap->add_option("--grid", p_grid, "cells per axis");
  pmap->add_option("--window", p_window, "history window length");
  pmap->add_option("--out", p_out, "output file");
  auto* pcost = plotdata->add_subcommand("cost-curve",
                                         "cost columns of a report file");
  std::string r_report;
  std::string r_out = "cost_curve.csv";
  pcost->add_option("--report", r_report, "report file")->required();
  pcost->add_option("--out", r_out, "output file");
  auto* pdiv = plotdata->add_subcommand("diversity-curve",
                                        "diversity column of a report file");
  std::string d_out = "diversity_curve.csv";
  pdiv->add_option("--report", r_report, "report file")->required();
  pdiv->add_option("--out", d_out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (collect->parsed())
      return run_collect(c_env,
                         c_policy.empty() ? (c_env == "grid2d" ? "behavior"
                                                               : "random")
                                          : c_policy,
                         c_episodes, c_horizon, c_window, c_bound,
                         resolve_seed(seed_flag, nullptr), c_out);
    if (train->parsed())
      return run_train(config_path, seed_flag, t_batch, out_path,
                       t_iteration);
    if (loop->parsed()) return run_loop(config_path, seed_flag, out_path);
    if (eval->parsed())
      return run_eval(e_checkpoint, e_env, e_episodes, e_horizon, e_window,
                      e_bound, resolve_seed(seed_flag, nullptr));
    if (plotdata->parsed()) {
      if (pmap->parsed()) {
        nets::Network policy = nets::load_network(p_checkpoint);
        rollout::RolloutContext ctx;
        ctx.spec = envs::Environment::grid2d().spec();
        ctx.window = p_window;
        harness::write_policy_map(
            harness::policy_map_rows(policy, ctx, p_grid), p_out);
        std::cout << "wrote " << p_grid * p_grid << " rows to " << p_out
                  << '\n';
        return 0;
      }
      const std::vector<harness::ReportRow> rows =
          harness::read_report(r_report);
      if (pcost->parsed()) {
        harness::write_cost_curve(rows, r_out);
        std::cout << "wrote " << r_out << '\n';
      } else {
        harness::write_diversity_curve(rows, d_out);
        std::cout << "wrote " << d_out << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
