#include "ibrl/diversity.hpp"

namespace ibrl::diversity {

namespace {

double factorial(std::size_t k) {
  double f = 1.0;
  for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
  return f;
}

}  // namespace

double lsed_pair(const StatePath& a, const StatePath& b, Norm norm) {
  require(!a.empty() && a.size() == b.size(),
          "lsed_pair: horizons must match and be nonzero");
  double acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    require(a[t].size() == b[t].size(), "lsed_pair: state dimension mismatch");
    acc += norm == Norm::kL2 ? (a[t] - b[t]).norm()
                             : (a[t] - b[t]).lpNorm<1>();
  }
  return acc / static_cast<double>(a.size());
}

double lsed_all(const std::vector<StatePath>& paths, Norm norm,
                bool pair_average) {
  require(paths.size() >= 2, "lsed_all: need at least two trajectories");
  const std::size_t k = paths.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      acc += 2.0 * lsed_pair(paths[i], paths[j], norm);
  const double scale = pair_average
                           ? static_cast<double>(k) * (k - 1)
                           : factorial(k);
  return acc / scale;
}

double min_lsed(const std::vector<StatePath>& paths, Norm norm) {
  require(paths.size() >= 2, "min_lsed: need at least two trajectories");
  const std::size_t h = paths.front().size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t j = i + 1; j < paths.size(); ++j)
      best = std::min(best, lsed_pair(paths[i], paths[j], norm));
  return best / static_cast<double>(h);
}

ad::Var lsed_pair_t(ad::Tape& tape, const VarPath& a, const VarPath& b,
                    Norm norm) {
  require(!a.empty() && a.size() == b.size(),
          "lsed_pair: horizons must match and be nonzero");
  std::vector<ad::Var> terms;
  terms.reserve(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    ad::Var diff = tape.sub(a[t], b[t]);
    terms.push_back(norm == Norm::kL2 ? tape.norm_l2(diff)
                                      : tape.norm_l1(diff));
  }
  const std::vector<double> weights(terms.size(),
                                    1.0 / static_cast<double>(terms.size()));
  return tape.weighted_sum(terms, weights);
}

ad::Var lsed_all_t(ad::Tape& tape, const std::vector<VarPath>& paths,
                   Norm norm, bool pair_average) {
  require(paths.size() >= 2, "lsed_all: need at least two trajectories");
  const std::size_t k = paths.size();
  std::vector<ad::Var> pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      pairs.push_back(lsed_pair_t(tape, paths[i], paths[j], norm));
  const double scale =
      2.0 / (pair_average ? static_cast<double>(k) * (k - 1) : factorial(k));
  const std::vector<double> weights(pairs.size(), scale);
  return tape.weighted_sum(pairs, weights);
}

ad::Var min_lsed_t(ad::Tape& tape, const std::vector<VarPath>& paths,
                   Norm norm) {
  require(paths.size() >= 2, "min_lsed: need at least two trajectories");
  const std::size_t h = paths.front().size();
  ad::Var best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t j = i + 1; j < paths.size(); ++j) {
      ad::Var d = lsed_pair_t(tape, paths[i], paths[j], norm);
      if (d.scalar() < best_value) {
        best_value = d.scalar();
        best = d;
      }
    }
  }
  return tape.scale(best, 1.0 / static_cast<double>(h));
}

}  // namespace ibrl::diversity
