#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "evcharge/core.hpp"

namespace evcharge {

/// First car departure and last car arrival of one household on one day.
struct TripRecord {
  int household_id = 0;
  int day_index = 0;        // days since the grid's first UTC midnight
  int first_departure = 0;  // seconds of day
  int last_arrival = 0;     // seconds of day
  double daily_distance_km = 0.0;

  bool valid() const { return first_departure < last_arrival && daily_distance_km >= 0.0; }
};

/// Seven representative models. These numbers are implementation-chosen
/// defaults, not measured data; override them through SynthConfig.
std::vector<EvModel> default_ev_catalog();

enum class PlainMode {
  Individual,  // one series per EV-less household
  Aggregate,   // a single record carrying pool-average x n_plain_households
};

struct DailyPeak {
  double hour = 0.0;
  double amplitude_kw = 0.0;
  double width_hours = 1.0;  // gaussian sigma
};

struct BaselineProfile {
  double base_kw = 0.25;
  DailyPeak morning{7.5, 0.45, 1.2};
  DailyPeak evening{19.0, 1.1, 2.0};
  double noise_scale = 0.15;  // household scale and per-step relative noise
};

struct TripDistribution {
  double departure_mean_h = 7.75;
  double departure_sd_h = 1.0;
  double arrival_mean_h = 17.5;
  double arrival_sd_h = 1.5;
  double distance_log_mean = 3.4;  // log km, ~30 km median
  double distance_log_sd = 0.6;
};

struct SynthConfig {
  int n_ev_households = 10;
  int n_plain_households = 10;
  int days = 21;
  int step_seconds = 1800;
  std::int64_t start_epoch = 1357516800;  // 2013-01-07T00:00:00Z, a Monday
  std::uint64_t rng_seed = 1;
  PlainMode plain_mode = PlainMode::Individual;
  int aggregate_pool_size = 90;
  BaselineProfile profile;
  TripDistribution trips;
  std::vector<EvModel> ev_catalog = default_ev_catalog();

  void validate() const;
};

/// Noise-free household load at a time of day, kW.
double daily_profile_kw(const BaselineProfile& profile, int seconds_of_day);

Scenario synthesize(const SynthConfig& config);

/// Draws one day of trips per EV household, in household then day order.
std::vector<TripRecord> synthesize_trips(const SynthConfig& config,
                                         const std::vector<int>& ev_household_ids,
                                         std::mt19937_64& rng);

/// One request per (household, night) for which both the evening arrival and
/// the next morning's departure are known. Arrival rounds up and departure
/// rounds down to step boundaries. Request ids count up from first_id.
std::vector<ChargingRequest> build_requests(const std::vector<TripRecord>& trips,
                                            const std::vector<EvModel>& ev_catalog,
                                            const TimeGrid& grid, std::mt19937_64& rng,
                                            int first_id = 0);

struct RepairResult {
  std::vector<ChargingRequest> requests;
  int removed = 0;
  int input_count = 0;
  std::vector<std::string> warnings;

  double removed_fraction() const {
    return input_count == 0 ? 0.0 : static_cast<double>(removed) / input_count;
  }
};

/// Removes requests that cannot be met at full power and stretches the
/// household's previous request over the removed window.
RepairResult repair_infeasible(std::vector<ChargingRequest> requests);

struct ConsumptionData {
  TimeGrid grid;
  std::vector<int> household_ids;
  std::vector<std::vector<double>> series_kw;
  std::vector<int> rejected_households;  // too many missing steps
  int interpolated_steps = 0;
};

/// `timestamp,household_id,kwh`, one row per household per step.
ConsumptionData ingest_consumption_csv(const std::filesystem::path& path,
                                       int step_seconds = 1800,
                                       double max_missing_fraction = 0.005);

struct TripsData {
  std::vector<TripRecord> trips;
  int rejected_rows = 0;
};

/// `household_id,day_index,first_departure_s,last_arrival_s,distance_km`.
TripsData ingest_trips_csv(const std::filesystem::path& path);

struct IngestOptions {
  std::uint64_t rng_seed = 1;
  std::vector<EvModel> ev_catalog = default_ev_catalog();
  int step_seconds = 1800;
};

/// Households seen in the trips file become EV households.
Scenario ingest_scenario(const std::filesystem::path& consumption_csv,
                         const std::filesystem::path& trips_csv, const IngestOptions& options,
                         std::vector<std::string>* warnings = nullptr);

}  // namespace evcharge
