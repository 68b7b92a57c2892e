#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evcharge/controllers.hpp"
#include "evcharge/core.hpp"
#include "evcharge/directopt.hpp"
#include "evcharge/imitate.hpp"
#include "evcharge/relax.hpp"

namespace evcharge {

struct MetricsReport {
  double objective = 0.0;  // population std of total load, kW
  double min_kw = 0.0;
  double p2_5_kw = 0.0;
  double p97_5_kw = 0.0;
  double max_kw = 0.0;
  int window_begin = 0;  // first evaluated step
  int window_end = 0;    // one past the last
};

/// Percentile with linear interpolation between order statistics at position
/// p/100 * (n-1) of the sorted sample.
double percentile(std::vector<double> values, double p);

/// Statistics over steps [begin, end) of a series.
MetricsReport metrics_over(std::span<const double> total_kw, int begin, int end);

/// Statistics over steps [steps_per_day, T). Throws ContractError when the
/// series does not cover two days or does not match the grid.
MetricsReport metrics(std::span<const double> total_kw, const TimeGrid& grid);

/// Requests whose row misses R by more than 1e-9 * max(1, R) or leaves
/// [0, cap] by more than kBoundTol, plus rows for unknown requests.
int feasibility_violations(const Scenario& scenario, const Schedule& schedule);

enum class EntryGroup { Qp = 0, Heuristic = 1, Direct = 2, Imitation = 3 };

/// One row of a comparison. Deterministic rows carry a schedule or a
/// controller; stochastic rows carry a trainer that maps a seed to a
/// controller.
struct CompareEntry {
  std::string label;
  EntryGroup group = EntryGroup::Heuristic;
  std::optional<Schedule> schedule;
  std::optional<Controller> controller;
  std::function<Controller(std::uint64_t seed)> trainer;

  bool stochastic() const { return static_cast<bool>(trainer); }
};

struct CompareRow {
  std::string label;
  EntryGroup group = EntryGroup::Heuristic;
  int runs = 0;
  double objective_mean = 0.0;
  double objective_std = 0.0;  // sample std over runs, 0 for a single run
  double min_kw = 0.0;         // the remaining statistics are means over runs
  double p2_5_kw = 0.0;
  double p97_5_kw = 0.0;
  double max_kw = 0.0;
  std::vector<double> objectives;
  std::vector<double> total_kw;  // series of the first run
};

/// Runs every entry on `scenario` (stochastic ones once per seed), checks
/// that every simulated request received exactly its energy, and returns the
/// rows grouped QP, heuristics, direct, imitation with input order kept within
/// a group. Labels must be unique.
std::vector<CompareRow> compare(const Scenario& scenario, const std::vector<CompareEntry>& entries,
                                const std::vector<std::uint64_t>& seeds);

/// Seeds used for `reps` repetitions under a base seed.
std::vector<std::uint64_t> repetition_seeds(std::uint64_t base_seed, int reps);

/// Array of {label, objective_mean, objective_std, min, p2_5, p97_5, max}.
std::string report_json(const std::vector<CompareRow>& rows);
/// `step,timestamp,label,total_kw`.
std::string plot_csv(const std::vector<CompareRow>& rows, const TimeGrid& grid);

/// Trainers shared by the CLI and the tests.
Controller imitation_controller(const Scenario& scenario, const Schedule& target,
                                const FeatureLayout& layout, int hidden_dim,
                                const TrainConfig& config);
Controller cma_controller(const Scenario& scenario, const FeatureLayout& layout, int hidden_dim,
                          const CmaConfig& config);
Controller gd_controller(const Scenario& scenario, const FeatureLayout& layout, int hidden_dim,
                         const GdConfig& config);

/// A comparison described by a JSON document (see README); relative paths
/// resolve against the directory of the document.
struct CompareSpec {
  Scenario scenario;
  std::vector<CompareEntry> entries;
};
CompareSpec load_compare_spec(const std::filesystem::path& path);

}  // namespace evcharge
