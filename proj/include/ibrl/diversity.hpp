#pragma once

#include <vector>

#include "ibrl/common.hpp"
#include "ibrl/tape.hpp"

namespace ibrl::diversity {

enum class Measure { kLsed, kMinLsed };
enum class Norm { kL2, kL1 };

struct DiversityConfig {
  Measure measure = Measure::kMinLsed;
  Norm norm = Norm::kL2;
  double alpha_d = 0.0;
  bool exclude_first = true;   // keep one policy driven by reward/safety only
  bool pair_average = false;   // 1/(K(K-1)) instead of the printed 1/K!
};

// A trajectory reduced to its state sequence.
using StatePath = std::vector<Vector>;

// Mean over time of the chosen norm of time-aligned state differences.
double lsed_pair(const StatePath& a, const StatePath& b, Norm norm);

// Sum of lsed_pair over ordered pairs, scaled by 1/K! (or averaged over
// pairs when pair_average is set).
double lsed_all(const std::vector<StatePath>& paths, Norm norm,
                bool pair_average = false);

// Minimum lsed_pair over unordered pairs, with the extra 1/H factor.
double min_lsed(const std::vector<StatePath>& paths, Norm norm);

// Tape counterparts over state sequences of tape nodes. min tie-breaking:
// the first pair in lexicographic (i, j) order receives the gradient.
using VarPath = std::vector<ad::Var>;

ad::Var lsed_pair_t(ad::Tape& tape, const VarPath& a, const VarPath& b,
                    Norm norm);
ad::Var lsed_all_t(ad::Tape& tape, const std::vector<VarPath>& paths,
                   Norm norm, bool pair_average = false);
ad::Var min_lsed_t(ad::Tape& tape, const std::vector<VarPath>& paths,
                   Norm norm);

}  // namespace ibrl::diversity
