#include "ibrl/fit.hpp"

#include <algorithm>
#include <numeric>

#include "ibrl/optim.hpp"
#include "ibrl/param_vector.hpp"
#include "ibrl/tape.hpp"

namespace ibrl::nets {

namespace {

enum class Loss { kMse, kGaussianNll };

Matrix gather_cols(const Matrix& m, const std::vector<int>& idx, int begin,
                   int end) {
  Matrix out(m.rows(), end - begin);
  for (int i = begin; i < end; ++i) out.col(i - begin) = m.col(idx[i]);
  return out;
}

ad::Var build_loss(ad::Tape& tape, const BoundNet& bound, Loss loss,
                   const Matrix& x, const Matrix& y) {
  ad::Var input = tape.constant(x);
  ad::Var target = tape.constant(y);
  if (loss == Loss::kMse) {
    ad::Var pred = forward(tape, bound, input);
    return tape.mean(tape.square(tape.sub(pred, target)));
  }
  // Per-sample NLL up to the constant term:
  //   sum_d [ log sigma_d + ((a_d - mu_d) / sigma_d)^2 / 2 ], averaged over
  // the minibatch.
  BoundGaussianOutput out = forward_gaussian(tape, bound, input);
  ad::Var z = tape.cdiv(tape.sub(target, out.mean), out.sigma);
  const double inv_b = 1.0 / static_cast<double>(y.cols());
  return tape.weighted_sum(
      {tape.sum(tape.log(out.sigma)), tape.sum(tape.square(z))},
      {inv_b, 0.5 * inv_b});
}

FitReport run_fit(Network& net, const Matrix& inputs, const Matrix& targets,
                  const FitConfig& cfg, Loss loss) {
  require(inputs.cols() == targets.cols(),
          "fit: inputs/targets sample count mismatch");
  require(inputs.cols() > 0, "fit: empty dataset");
  require(cfg.minibatch > 0, "fit: minibatch must be positive");

  const int n = static_cast<int>(inputs.cols());
  Rng rng = make_rng(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  int n_val = static_cast<int>(cfg.val_split * n);
  if (n_val >= n) n_val = n - 1;
  const int n_train = n - n_val;
  const Matrix val_x = gather_cols(inputs, order, n_train, n);
  const Matrix val_y = gather_cols(targets, order, n_train, n);

  ParamVector params = to_params(net);
  AdamState adam(params.size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  FitReport report;
  double best_val = std::numeric_limits<double>::infinity();
  Vector best_params = params.values();
  int stale = 0;

  ad::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.begin() + n_train, rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int at = 0; at < n_train; at += cfg.minibatch) {
      const int stop = std::min(at + cfg.minibatch, n_train);
      const Matrix bx = gather_cols(inputs, order, at, stop);
      const Matrix by = gather_cols(targets, order, at, stop);
      tape.rewind();
      from_params(net, params.values());
      BoundNet bound = bind(tape, net, true);
      ad::Var l = build_loss(tape, bound, loss, bx, by);
      Vector grad = ad::backward_grad(tape, l, bound.param_vars());
      epoch_loss += l.scalar();
      ++batches;
      adam_step(adam, params.values(), grad);
    }
    report.epoch_losses.push_back(epoch_loss / std::max(batches, 1));
    ++report.epochs_run;

    double val_loss = report.epoch_losses.back();
    if (n_val > 0) {
      tape.rewind();
      from_params(net, params.values());
      BoundNet bound = bind(tape, net, false);
      val_loss = build_loss(tape, bound, loss, val_x, val_y).scalar();
    }
    if (val_loss < best_val - 1e-9) {
      best_val = val_loss;
      best_params = params.values();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      report.early_stopped = true;
      break;
    }
  }

  from_params(net, report.epochs_run > 0 ? best_params : params.values());
  report.final_loss =
      report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
  return report;
}

}  // namespace

FitReport fit_regression(Network& net, const Matrix& inputs,
                         const Matrix& targets, const FitConfig& cfg) {
  require(net.head == Head::kLinear,
          "fit_regression: expected a linear-head network");
  require(inputs.rows() == net.input_dim() &&
              targets.rows() == net.output_dim(),
          "fit_regression: dataset dimensions do not match network");
  return run_fit(net, inputs, targets, cfg, Loss::kMse);
}

FitReport fit_behavior_policy(Network& net, const Matrix& states,
                              const Matrix& actions, const FitConfig& cfg) {
  require(net.head == Head::kGaussian,
          "fit_behavior_policy: expected a gaussian-head network");
  require(states.rows() == net.input_dim() &&
              actions.rows() == net.output_dim(),
          "fit_behavior_policy: dataset dimensions do not match network");
  return run_fit(net, states, actions, cfg, Loss::kGaussianNll);
}

}  // namespace ibrl::nets
