#include "ibrl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ibrl::harness {

namespace {

using nlohmann::json;

constexpr int kBatchVersion = 1;

std::string fmt(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.12g", v);
  return buffer;
}

json require_field(const json& doc, const std::string& field) {
  if (!doc.contains(field))
    throw ContractError("batch file: missing field " + field);
  return doc.at(field);
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.begin(), v.end());
}

Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), v.size());
}

double mean_of(const std::vector<double>& values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return values.empty() ? 0.0 : acc / values.size();
}

double stderr_of(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / (values.size() - 1)) /
         std::sqrt(static_cast<double>(values.size()));
}

void write_rows(std::ostream& out,
                const std::vector<search::IterationReport>& reports,
                int run_id, bool with_run_id) {
  for (const search::IterationReport& r : reports) {
    if (with_run_id) out << run_id << ',';
    out << r.iteration << ',' << fmt(mean_of(r.true_cost)) << ','
        << fmt(stderr_of(r.true_cost)) << ',' << fmt(mean_of(r.virtual_cost))
        << ',' << fmt(r.diversity) << ',' << r.batch_size << ','
        << fmt(r.eval_cost) << ',' << r.epochs_run << ',' << r.safety_events
        << '\n';
  }
}

constexpr const char* kColumns =
    "iteration,true_cost_mean,true_cost_stderr,virtual_cost,diversity,"
    "batch_size,eval_cost,epochs,safety_events";

}  // namespace

void save_batch(const envs::Batch& batch, const std::string& path) {
  json doc;
  doc["format_version"] = kBatchVersion;
  doc["env"] = batch.env_id;
  doc["obs_dim"] = batch.obs_dim;
  doc["action_dim"] = batch.action_dim;
  doc["window"] = batch.window;
  doc["count"] = batch.transitions.size();
  json records = json::array();
  for (const envs::Transition& tr : batch.transitions) {
    records.push_back({{"episode", tr.episode},
                       {"t", tr.t},
                       {"iteration", tr.iteration},
                       {"policy", tr.policy},
                       {"state", to_std(tr.state)},
                       {"action", to_std(tr.action)},
                       {"reward", tr.reward},
                       {"next_obs", to_std(tr.next_obs)}});
  }
  doc["transitions"] = std::move(records);
  std::ofstream out(path);
  require(out.good(), "save_batch: cannot open " + path);
  out << doc.dump() << '\n';
}

envs::Batch load_batch(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_batch: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ContractError(std::string("batch file: malformed JSON: ") +
                        e.what());
  }
  const int version = require_field(doc, "format_version").get<int>();
  require(version == kBatchVersion,
          "batch file: unsupported format_version " + std::to_string(version));

  envs::Batch batch;
  batch.env_id = require_field(doc, "env").get<std::string>();
  batch.obs_dim = require_field(doc, "obs_dim").get<int>();
  batch.action_dim = require_field(doc, "action_dim").get<int>();
  batch.window = require_field(doc, "window").get<int>();
  const auto count = require_field(doc, "count").get<std::size_t>();
  const json records = require_field(doc, "transitions");
  require(records.size() == count,
          "batch file: field count does not match transition records "
          "(truncated file?)");

  int last_episode = -1;
  int last_t = -1;
  for (const json& r : records) {
    envs::Transition tr;
    tr.episode = require_field(r, "episode").get<int>();
    tr.t = require_field(r, "t").get<int>();
    tr.iteration = require_field(r, "iteration").get<int>();
    tr.policy = require_field(r, "policy").get<int>();
    tr.state = to_eigen(require_field(r, "state").get<std::vector<double>>());
    tr.action =
        to_eigen(require_field(r, "action").get<std::vector<double>>());
    tr.reward = require_field(r, "reward").get<double>();
    tr.next_obs =
        to_eigen(require_field(r, "next_obs").get<std::vector<double>>());
    require(std::isfinite(tr.reward), "batch file: non-finite reward");
    if (tr.episode == last_episode)
      require(tr.t == last_t + 1,
              "batch file: time indices within an episode must be "
              "consecutive");
    last_episode = tr.episode;
    last_t = tr.t;
    batch.transitions.push_back(std::move(tr));
  }
  return batch;
}

void write_report(const std::vector<search::IterationReport>& reports,
                  const std::string& path) {
  require(!reports.empty(), "write_report: empty report sequence");
  std::ofstream out(path);
  require(out.good(), "write_report: cannot open " + path);
  out << kColumns << '\n';
  write_rows(out, reports, 0, false);
}

void merge_reports(
    const std::vector<std::pair<int, std::vector<search::IterationReport>>>&
        runs,
    const std::string& path) {
  require(!runs.empty(), "merge_reports: no runs");
  std::ofstream out(path);
  require(out.good(), "merge_reports: cannot open " + path);
  out << "run_id," << kColumns << '\n';
  for (const auto& [run_id, reports] : runs)
    write_rows(out, reports, run_id, true);
}

std::vector<ReportRow> read_report(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_report: cannot open " + path);
  std::string header;
  std::getline(in, header);
  const bool merged = header.rfind("run_id,", 0) == 0;
  std::vector<ReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(fields, field, ',')) values.push_back(std::stod(field));
    const std::size_t expected = merged ? 10 : 9;
    require(values.size() == expected, "read_report: malformed row");
    ReportRow row;
    std::size_t at = 0;
    if (merged) row.run_id = static_cast<int>(values[at++]);
    row.iteration = static_cast<int>(values[at++]);
    row.true_cost_mean = values[at++];
    row.true_cost_stderr = values[at++];
    row.virtual_cost = values[at++];
    row.diversity = values[at++];
    row.batch_size = static_cast<std::size_t>(values[at++]);
    row.eval_cost = values[at++];
    row.epochs = static_cast<int>(values[at++]);
    row.safety_events = static_cast<int>(values[at++]);
    rows.push_back(row);
  }
  return rows;
}

std::vector<PolicyMapRow> policy_map_rows(const nets::Network& policy,
                                          const rollout::RolloutContext& ctx,
                                          int grid_n) {
  require(grid_n >= 1, "policy_map_rows: grid must be >= 1");
  require(ctx.spec.obs_dim == 2 && ctx.spec.action_dim == 2,
          "policy_map_rows: needs a 2D environment");
  std::vector<PolicyMapRow> rows;
  rows.reserve(static_cast<std::size_t>(grid_n) * grid_n);
  const double lo = ctx.spec.obs_lo[0];
  const double hi = ctx.spec.obs_hi[0];
  const double cell = (hi - lo) / grid_n;
  for (int iy = 0; iy < grid_n; ++iy) {
    for (int ix = 0; ix < grid_n; ++ix) {
      Vector obs(2);
      obs << lo + (ix + 0.5) * cell, lo + (iy + 0.5) * cell;
      Vector history(ctx.window * 2);
      for (int w = 0; w < ctx.window; ++w) history.segment(2 * w, 2) = obs;
      Vector action =
          nets::mlp_forward(policy, ctx.spec.normalize_history(history));
      rows.push_back({obs[0], obs[1], std::atan2(action[1], action[0])});
    }
  }
  return rows;
}

void write_policy_map(const std::vector<PolicyMapRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_policy_map: cannot open " + path);
  out << "x,y,angle\n";
  for (const PolicyMapRow& r : rows)
    out << fmt(r.x) << ',' << fmt(r.y) << ',' << fmt(r.angle) << '\n';
}

void write_cost_curve(const std::vector<ReportRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_cost_curve: cannot open " + path);
  out << "run_id,iteration,true_cost_mean,true_cost_stderr,virtual_cost,"
         "eval_cost\n";
  for (const ReportRow& r : rows)
    out << r.run_id << ',' << r.iteration << ',' << fmt(r.true_cost_mean)
        << ',' << fmt(r.true_cost_stderr) << ',' << fmt(r.virtual_cost) << ','
        << fmt(r.eval_cost) << '\n';
}

void write_diversity_curve(const std::vector<ReportRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_diversity_curve: cannot open " + path);
  out << "run_id,iteration,diversity\n";
  for (const ReportRow& r : rows)
    out << r.run_id << ',' << r.iteration << ',' << fmt(r.diversity) << '\n';
}

}  // namespace ibrl::harness
