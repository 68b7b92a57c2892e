#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace evcharge {

inline constexpr int kSecondsPerDay = 86400;
inline constexpr double kDefaultMaxPowerKw = 3.0;

/// Uniform discrete clock of a scenario. Step k covers
/// [start_epoch + k*step_seconds, start_epoch + (k+1)*step_seconds).
struct TimeGrid {
  std::int64_t start_epoch = 0;  // seconds, UTC
  int step_seconds = 1800;
  int n_steps = 0;

  // Throws ConfigError unless step_seconds divides a day and n_steps > 0.
  void validate() const;

  int steps_per_day() const { return kSecondsPerDay / step_seconds; }
  int warmup_steps() const { return steps_per_day(); }
  /// Length of one step in hours (the kWh <-> kW conversion factor).
  double step_hours() const { return step_seconds / 3600.0; }

  std::int64_t epoch_at(int step) const {
    return start_epoch + static_cast<std::int64_t>(step) * step_seconds;
  }
  /// Seconds since the last UTC midnight at the start of `step`.
  int seconds_of_day(int step) const;
  /// 0 = Sunday ... 6 = Saturday, UTC. 1970-01-01 was a Thursday.
  int weekday(int step) const;
  bool is_weekend(int step) const {
    const int w = weekday(step);
    return w == 0 || w == 6;
  }
};

/// One plug-in interval: the car is home during steps [start_step, end_step)
/// and needs energy_kwh delivered by the end of it.
struct ChargingRequest {
  int id = 0;
  int household_id = 0;
  int start_step = 0;
  int end_step = 0;
  double energy_kwh = 0.0;
  double max_power_kw = kDefaultMaxPowerKw;
  double cap_kwh = 0.0;  // max_power_kw * step_hours, kept in sync by make_request

  int length() const { return end_step - start_step; }
  bool active_at(int step) const { return step >= start_step && step < end_step; }
  bool feasible() const { return energy_kwh <= length() * cap_kwh; }
};

ChargingRequest make_request(int id, int household_id, int start_step, int end_step,
                             double energy_kwh, const TimeGrid& grid,
                             double max_power_kw = kDefaultMaxPowerKw);

struct Household {
  int id = 0;
  bool has_ev = false;
};

struct EvModel {
  std::string name;
  double battery_kwh = 0.0;
  double consumption_kwh_per_km = 0.0;
};

struct Scenario {
  TimeGrid grid;
  std::vector<Household> households;
  std::vector<std::vector<double>> baseline_kw;  // parallel to households, each of length n_steps
  std::vector<ChargingRequest> requests;          // sorted by household, then start_step
  std::vector<EvModel> ev_catalog;

  // Throws StructuralError describing the first violated invariant.
  void validate() const;

  int household_index(int household_id) const;  // -1 when unknown
  const ChargingRequest& request(int request_id) const;
  /// Sum of all household baselines, kW.
  std::vector<double> baseline_total_kw() const;
};

/// Per-request charging energies in kWh per step, row index 0 = start_step.
struct Schedule {
  std::map<int, std::vector<double>> rows;

  bool operator==(const Schedule&) const = default;
};

Schedule zero_schedule(const Scenario& scenario);

/// Aggregate load in kW: baselines plus every scheduled charge converted from
/// kWh-per-step to kW.
std::vector<double> total_load(const Scenario& scenario, const Schedule& schedule);

struct ConservationCheck {
  bool ok = false;
  double residual = 0.0;  // |sum(row) - R|
};

ConservationCheck energy_conservation_check(const ChargingRequest& request,
                                            std::span<const double> row);

inline constexpr double kBoundTol = 1e-9;
inline double energy_tol(double energy_kwh) { return 1e-6 * std::max(1.0, energy_kwh); }

}  // namespace evcharge
