#pragma once

#include <variant>

#include "ibrl/common.hpp"
#include "ibrl/tape.hpp"

namespace ibrl::safety {

// Safety folded into the objective: trade reward against deviation from the
// behavior policy with weight lambda.
struct Objective {
  double lambda = 0.4;  // in [0, 1]; 0 imitates the behavior policy
};

// Likelihood-based safety zone: actions whose geometric-mean penalty stays
// below -delta are free, anything outside is charged with weight alpha_s.
struct SoftConstraint {
  double alpha_s = 20.0;
  double delta = 0.5;  // in [0, 1]
};

// Safety built into the policy head: actions are affinely remapped per step
// so the linearly affected state dimensions stay inside [state_lo, state_hi].
struct ConstrainedPolicy {
  double state_lo = 30.0;
  double state_hi = 70.0;
  Vector action_lo;  // per action dimension
  Vector action_hi;
  Vector effect;     // nonzero linear effect per constrained dimension
};

using SafetySpec = std::variant<Objective, SoftConstraint, ConstrainedPolicy>;

void validate(const SafetySpec& spec);

// || a - a_beta ||_2
double behavior_penalty(const Vector& a, const Vector& a_beta);
ad::Var behavior_penalty_t(ad::Tape& tape, ad::Var a, ad::Var a_beta);

// Negated geometric mean of the per-dimension unnormalized likelihood
// factors, always in [-1, 0): -exp(-sum_d ((a_d-mu_d)/sigma_d)^2 / (2 d)).
double geo_mean_penalty(const Vector& a, const Vector& mu,
                        const Vector& sigma);
ad::Var geo_mean_penalty_t(ad::Tape& tape, ad::Var a, ad::Var mu,
                           ad::Var sigma);

// One term of the soft-constraint sum: max(G + delta, 0).
double soft_constraint_term(double g, double delta);

// Per-dimension admissible action interval so that state + effect * action
// stays inside [state_lo, state_hi]. Intervals are tightened by an absolute
// 1e-12 so the guarantee survives floating-point rounding. Dimensions whose
// interval is empty (state beyond one-step recovery) are flagged; their
// interval collapses to the nearest recovering action.
struct ActionRange {
  Vector lo;
  Vector hi;
  int recovery_dims = 0;
};
ActionRange valid_action_range(const Vector& state_values,
                               const ConstrainedPolicy& spec);

// Eq-style affine remap of a raw bounded action into the valid range:
//   a = a_min + (a_max - a_min) * (raw - action_lo) / (action_hi - action_lo)
struct ConstrainedAction {
  Vector action;
  int recovery_dims = 0;
};
ConstrainedAction constrain_action(const Vector& raw,
                                   const Vector& state_values,
                                   const ConstrainedPolicy& spec);

// Differentiable version for virtual rollouts; gradients flow through both
// the raw action and the constrained state values.
ad::Var constrain_action_t(ad::Tape& tape, ad::Var raw, ad::Var state_values,
                           const ConstrainedPolicy& spec);

}  // namespace ibrl::safety
