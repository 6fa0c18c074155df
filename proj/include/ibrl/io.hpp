#pragma once

#include <string>
#include <vector>

#include "ibrl/envs.hpp"
#include "ibrl/loop.hpp"

namespace ibrl::harness {

// Versioned batch document; round-trips every field bit-exactly.
void save_batch(const envs::Batch& batch, const std::string& path);
envs::Batch load_batch(const std::string& path);

// Line-oriented report: one header plus one row per iteration with columns
// iteration, true_cost_mean, true_cost_stderr, virtual_cost, diversity,
// batch_size, eval_cost, epochs, safety_events. Numbers carry 12 significant
// digits so rows parse back to the written values.
void write_report(const std::vector<search::IterationReport>& reports,
                  const std::string& path);

struct ReportRow {
  int run_id = 0;
  int iteration = 0;
  double true_cost_mean = 0.0;
  double true_cost_stderr = 0.0;
  double virtual_cost = 0.0;
  double diversity = 0.0;
  std::size_t batch_size = 0;
  double eval_cost = 0.0;
  int epochs = 0;
  int safety_events = 0;
};
std::vector<ReportRow> read_report(const std::string& path);

// Aggregate of several runs, same columns prefixed by a run-id column.
void merge_reports(
    const std::vector<std::pair<int, std::vector<search::IterationReport>>>&
        runs,
    const std::string& path);

// Policy map over the 2D state space: grid_n x grid_n rows of
// (x, y, action angle), angle = atan2(a_y, a_x).
struct PolicyMapRow {
  double x = 0.0;
  double y = 0.0;
  double angle = 0.0;
};
std::vector<PolicyMapRow> policy_map_rows(const nets::Network& policy,
                                          const rollout::RolloutContext& ctx,
                                          int grid_n);
void write_policy_map(const std::vector<PolicyMapRow>& rows,
                      const std::string& path);

// Plot-ready projections of a report file.
void write_cost_curve(const std::vector<ReportRow>& rows,
                      const std::string& path);
void write_diversity_curve(const std::vector<ReportRow>& rows,
                           const std::string& path);

}  // namespace ibrl::harness
