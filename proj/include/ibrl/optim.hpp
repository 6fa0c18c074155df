#pragma once

#include <functional>

#include "ibrl/common.hpp"

namespace ibrl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators for one flat parameter vector.
struct AdamState {
  explicit AdamState(Eigen::Index n, AdamConfig cfg = {})
      : m(Vector::Zero(n)), v(Vector::Zero(n)), config(cfg) {}

  Vector m;
  Vector v;
  long step = 0;
  AdamConfig config;
};

// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, Vector& params, const Vector& grad);

// Central-difference gradient estimate, (f(p+e) - f(p-e)) / (2 step) per
// coordinate. Serves as the independent oracle for reverse-mode gradients.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& params, double step);

}  // namespace ibrl
