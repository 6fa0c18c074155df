#include "ibrl/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ibrl::safety {

namespace {

// Absolute shrink applied to admissible action intervals; large against
// rounding error of `state + effect * action`, negligible against any action.
constexpr double kRangeMargin = 1e-12;

}  // namespace

void validate(const SafetySpec& spec) {
  if (const auto* o = std::get_if<Objective>(&spec)) {
    require(o->lambda >= 0.0 && o->lambda <= 1.0,
            "safety: lambda must lie in [0, 1]");
  } else if (const auto* s = std::get_if<SoftConstraint>(&spec)) {
    require(s->alpha_s >= 0.0, "safety: alpha_s must be >= 0");
    require(s->delta >= 0.0 && s->delta <= 1.0,
            "safety: delta must lie in [0, 1]");
  } else if (const auto* c = std::get_if<ConstrainedPolicy>(&spec)) {
    require(c->state_lo < c->state_hi, "safety: state bounds must be ordered");
    require(c->action_lo.size() == c->action_hi.size() &&
                c->action_lo.size() == c->effect.size(),
            "safety: action bounds and effect sizes must agree");
    require((c->action_lo.array() < c->action_hi.array()).all(),
            "safety: action bounds must be ordered");
    require((c->effect.array() != 0.0).all(),
            "safety: effect coefficients must be nonzero");
  }
}

double behavior_penalty(const Vector& a, const Vector& a_beta) {
  require(a.size() == a_beta.size(),
          "behavior_penalty: action dimension mismatch");
  return (a - a_beta).norm();
}

ad::Var behavior_penalty_t(ad::Tape& tape, ad::Var a, ad::Var a_beta) {
  return tape.norm_l2(tape.sub(a, a_beta));
}

double geo_mean_penalty(const Vector& a, const Vector& mu,
                        const Vector& sigma) {
  require(a.size() == mu.size() && a.size() == sigma.size(),
          "geo_mean_penalty: dimension mismatch");
  require((sigma.array() > 0.0).all(),
          "geo_mean_penalty: sigma must be positive");
  const double q = ((a - mu).array() / sigma.array()).square().sum();
  // exp underflow would round the open upper bound onto -0; pin the result
  // strictly below zero at the smallest representable magnitude.
  return -std::max(std::exp(-q / (2.0 * static_cast<double>(a.size()))),
                   std::numeric_limits<double>::denorm_min());
}

ad::Var geo_mean_penalty_t(ad::Tape& tape, ad::Var a, ad::Var mu,
                           ad::Var sigma) {
  ad::Var q = tape.sum(tape.square(tape.cdiv(tape.sub(a, mu), sigma)));
  const double inv = -1.0 / (2.0 * static_cast<double>(a.rows()));
  ad::Var g = tape.neg(tape.exp(tape.scale(q, inv)));
  return tape.cmin(
      g, tape.constant(-std::numeric_limits<double>::denorm_min()));
}

double soft_constraint_term(double g, double delta) {
  return std::max(g + delta, 0.0);
}

ActionRange valid_action_range(const Vector& state_values,
                               const ConstrainedPolicy& spec) {
  require(state_values.size() == spec.effect.size(),
          "valid_action_range: state dimension mismatch");
  const Eigen::Index d = state_values.size();
  ActionRange range;
  range.lo.resize(d);
  range.hi.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double w = spec.effect[i];
    const double r1 = (spec.state_lo - state_values[i]) / w;
    const double r2 = (spec.state_hi - state_values[i]) / w;
    double lo = std::max(spec.action_lo[i], std::min(r1, r2) + kRangeMargin);
    double hi = std::min(spec.action_hi[i], std::max(r1, r2) - kRangeMargin);
    if (lo > hi) {
      // State beyond one-step return: recover toward the violated bound with
      // the closest admissible action.
      const double target = state_values[i] > spec.state_hi ? spec.state_hi
                                                            : spec.state_lo;
      double a = (target - state_values[i]) / w;
      a = std::clamp(a, spec.action_lo[i], spec.action_hi[i]);
      lo = hi = a;
      ++range.recovery_dims;
    }
    range.lo[i] = lo;
    range.hi[i] = hi;
  }
  return range;
}

ConstrainedAction constrain_action(const Vector& raw,
                                   const Vector& state_values,
                                   const ConstrainedPolicy& spec) {
  require(raw.size() == spec.effect.size(),
          "constrain_action: action dimension mismatch");
  ActionRange range = valid_action_range(state_values, spec);
  ConstrainedAction out;
  out.recovery_dims = range.recovery_dims;
  out.action.resize(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double frac = (raw[i] - spec.action_lo[i]) /
                        (spec.action_hi[i] - spec.action_lo[i]);
    const double a = range.lo[i] + (range.hi[i] - range.lo[i]) * frac;
    out.action[i] = std::clamp(a, range.lo[i], range.hi[i]);
  }
  return out;
}

ad::Var constrain_action_t(ad::Tape& tape, ad::Var raw, ad::Var state_values,
                           const ConstrainedPolicy& spec) {
  require(raw.rows() == spec.effect.size(),
          "constrain_action_t: action dimension mismatch");
  const Eigen::Index d = spec.effect.size();
  ad::Var b_lo = tape.constant(Matrix(Vector::Constant(d, spec.state_lo)));
  ad::Var b_hi = tape.constant(Matrix(Vector::Constant(d, spec.state_hi)));
  ad::Var w = tape.constant(Matrix(spec.effect));
  ad::Var r1 = tape.cdiv(tape.sub(b_lo, state_values), w);
  ad::Var r2 = tape.cdiv(tape.sub(b_hi, state_values), w);
  ad::Var a_lo_c = tape.constant(Matrix(spec.action_lo));
  ad::Var a_hi_c = tape.constant(Matrix(spec.action_hi));
  ad::Var a_min = tape.cmax(a_lo_c,
                            tape.add_const(tape.cmin(r1, r2), kRangeMargin));
  ad::Var a_max = tape.cmin(a_hi_c,
                            tape.add_const(tape.cmax(r1, r2), -kRangeMargin));
  // Empty intervals collapse onto a_min, which then equals the recovery
  // action used by the plain path whenever recovery is reachable.
  ad::Var span = tape.cmax(tape.sub(a_max, a_min), tape.scale(w, 0.0));
  Vector inv_span = (spec.action_hi - spec.action_lo).cwiseInverse();
  ad::Var frac = tape.cmul(tape.sub(raw, a_lo_c),
                           tape.constant(Matrix(inv_span)));
  ad::Var a = tape.add(a_min, tape.cmul(span, frac));
  // Clamp away rounding spill; with an empty interval this returns a_min.
  return tape.cmin(tape.cmax(a, a_min), tape.cmax(a_max, a_min));
}

}  // namespace ibrl::safety
