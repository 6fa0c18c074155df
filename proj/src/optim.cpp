#include "ibrl/optim.hpp"

#include <cmath>

namespace ibrl {

void adam_step(AdamState& state, Vector& params, const Vector& grad) {
  require(params.size() == state.m.size(),
          "adam_step: state/params length mismatch");
  require(grad.size() == params.size(),
          "adam_step: gradient length mismatch");
  const AdamConfig& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  state.v = c.beta2 * state.v +
            (1.0 - c.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.lr * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + c.eps);
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& params, double step) {
  require(step > 0.0, "finite_diff_grad: step must be positive");
  Vector grad(params.size());
  Vector p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = f(p);
    p[i] = saved - step;
    const double down = f(p);
    p[i] = saved;
    require(std::isfinite(up) && std::isfinite(down),
            "finite_diff_grad: function value is not finite");
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace ibrl
