// Scratch: reward-model landscape on the surrogate box from the random batch.
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
  envs::IbConfig ib;
  ib.start_lo = 30.0;
  ib.start_hi = 70.0;

  search::RunnerConfig cfg;
  cfg.env = envs::Environment::ib_surrogate(ib);
  cfg.window = 1;
  cfg.model_hidden = {static_cast<int>(arg("hidden", 24))};
  if (arg("hidden2", 0) > 0)
    cfg.model_hidden.push_back(static_cast<int>(arg("hidden2", 0)));
  cfg.model_fit.epochs = static_cast<int>(arg("fitepochs", 100));
  cfg.model_fit.minibatch = static_cast<int>(arg("fitmb", 64));
  cfg.model_fit.lr = arg("fitlr", 3e-3);
  cfg.model_fit.patience = static_cast<int>(arg("fitpatience", 20));
  cfg.seed = static_cast<std::uint64_t>(arg("seed", 1));

  const int episodes = static_cast<int>(arg("episodes", 5));
  envs::Batch batch = envs::collect_batch(
      cfg.env, envs::CollectPolicy::kRandom, episodes, 200,
      mix_seed(cfg.seed, 1), 1, std::make_pair(30.0, 70.0));
  std::cout << "batch " << batch.size() << "\n";
  search::ModelSet models = search::fit_models(batch, cfg, 1);

  const envs::EnvSpec& spec = cfg.env.spec();
  double best = -1e18;
  Eigen::Vector3d argmax;
  double mae = 0.0;
  int n = 0;
  for (double v = 31.0; v <= 69.0; v += 2.0)
    for (double g = 31.0; g <= 69.0; g += 2.0)
      for (double h = 31.0; h <= 69.0; h += 2.0) {
        Vector obs = envs::ib_make_obs(v, g, h, ib);
        Vector in(9);
        in << spec.normalize_obs(obs), 0.0, 0.0, 0.0;
        const double r = nets::mlp_forward(models.reward, in)[0];
        Rng rng = make_rng(0);
        envs::IbConfig quiet = ib;
        quiet.cost_noise = false;
        const double truth =
            -envs::ib_surrogate_step(obs, Eigen::Vector3d::Zero(), rng, quiet)
                 .cost;
        mae += std::abs(r - truth);
        ++n;
        if (r > best) {
          best = r;
          argmax = Eigen::Vector3d(v, g, h);
        }
      }
  std::cout << "model argmax (" << argmax.x() << ", " << argmax.y() << ", "
            << argmax.z() << ") predicted cost/step " << -best << "\n";
  Rng rng = make_rng(0);
  envs::IbConfig quiet = ib;
  quiet.cost_noise = false;
  std::cout << "true cost/step there "
            << envs::ib_surrogate_step(
                   envs::ib_make_obs(argmax.x(), argmax.y(), argmax.z(), ib),
                   Eigen::Vector3d::Zero(), rng, quiet)
                   .cost
            << " (optimum 0 at (40, 60, 50))\n";
  std::cout << "mean |model - true| cost/step " << mae / n << "\n";
  return 0;
}
