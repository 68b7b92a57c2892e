#include "evcharge/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "csv.hpp"
#include "evcharge/error.hpp"
#include "evcharge/io.hpp"

namespace evcharge {

std::vector<EvModel> default_ev_catalog() {
  return {
      {"city-24", 24.0, 0.15},    {"hatch-40", 40.0, 0.16},  {"compact-50", 50.0, 0.14},
      {"crossover-64", 64.0, 0.17}, {"sedan-75", 75.0, 0.16}, {"suv-95", 95.0, 0.22},
      {"touring-100", 100.0, 0.13},
  };
}

void SynthConfig::validate() const {
  if (n_ev_households <= 0 || n_plain_households <= 0 || days <= 0)
    throw ConfigError("household counts and days must be positive");
  if (ev_catalog.empty()) throw ConfigError("empty EV catalog");
  if (plain_mode == PlainMode::Aggregate && aggregate_pool_size <= 0)
    throw ConfigError("aggregate_pool_size must be positive");
  if (profile.noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");
  TimeGrid g{start_epoch, step_seconds, days * (kSecondsPerDay / std::max(step_seconds, 1))};
  g.validate();
}

namespace {

double peak_kw(const DailyPeak& p, double hour) {
  double d = std::fabs(hour - p.hour);
  d = std::min(d, 24.0 - d);  // wrap around midnight
  return p.amplitude_kw * std::exp(-0.5 * d * d / (p.width_hours * p.width_hours));
}

std::vector<double> household_series(const SynthConfig& cfg, const TimeGrid& grid,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise = cfg.profile.noise_scale;
  const double scale = noise > 0.0 ? std::max(0.25, 1.0 + noise * normal(rng)) : 1.0;
  std::vector<double> series(static_cast<std::size_t>(grid.n_steps));
  for (int t = 0; t < grid.n_steps; ++t) {
    double v = daily_profile_kw(cfg.profile, grid.seconds_of_day(t));
    if (noise > 0.0) v *= scale * std::max(0.0, 1.0 + noise * normal(rng));
    series[static_cast<std::size_t>(t)] = v;
  }
  return series;
}

int hours_to_seconds(double h) { return static_cast<int>(std::lround(h * 3600.0)); }

}  // namespace

double daily_profile_kw(const BaselineProfile& profile, int seconds_of_day) {
  const double hour = seconds_of_day / 3600.0;
  return profile.base_kw + peak_kw(profile.morning, hour) + peak_kw(profile.evening, hour);
}

std::vector<TripRecord> synthesize_trips(const SynthConfig& config,
                                         const std::vector<int>& ev_household_ids,
                                         std::mt19937_64& rng) {
  const auto& d = config.trips;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<TripRecord> trips;
  for (int hid : ev_household_ids) {
    for (int day = 0; day < config.days; ++day) {
      const double dep = std::clamp(d.departure_mean_h + d.departure_sd_h * normal(rng), 4.0, 12.0);
      const double arr =
          std::clamp(d.arrival_mean_h + d.arrival_sd_h * normal(rng), dep + 1.0, 23.5);
      const double km = std::exp(d.distance_log_mean + d.distance_log_sd * normal(rng));
      trips.push_back({hid, day, hours_to_seconds(dep), hours_to_seconds(arr), km});
    }
  }
  return trips;
}

std::vector<ChargingRequest> build_requests(const std::vector<TripRecord>& trips,
                                            const std::vector<EvModel>& ev_catalog,
                                            const TimeGrid& grid, std::mt19937_64& rng,
                                            int first_id) {
  if (ev_catalog.empty()) throw ConfigError("empty EV catalog");
  std::map<int, std::map<int, const TripRecord*>> by_household;
  for (const auto& t : trips)
    if (t.valid()) by_household[t.household_id][t.day_index] = &t;

  // Offset of the grid start from its own UTC midnight.
  const std::int64_t midnight_offset = grid.seconds_of_day(0);
  std::uniform_int_distribution<std::size_t> pick(0, ev_catalog.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<ChargingRequest> out;
  int next_id = first_id;
  for (const auto& [hid, days] : by_household) {
    for (const auto& [day, trip] : days) {
      auto next = days.find(day + 1);
      if (next == days.end()) continue;
      const std::int64_t arrive =
          static_cast<std::int64_t>(day) * kSecondsPerDay + trip->last_arrival - midnight_offset;
      const std::int64_t leave = static_cast<std::int64_t>(day + 1) * kSecondsPerDay +
                                 next->second->first_departure - midnight_offset;
      const std::int64_t step = grid.step_seconds;
      // ceil for arrival, floor for departure (both may be negative)
      auto floor_div = [](std::int64_t a, std::int64_t b) {
        return a >= 0 ? a / b : -((-a + b - 1) / b);
      };
      std::int64_t s = -floor_div(-arrive, step);
      std::int64_t e = floor_div(leave, step);
      s = std::max<std::int64_t>(s, 0);
      if (e > grid.n_steps || e - s < 1) continue;

      const EvModel& model = ev_catalog[pick(rng)];
      double energy = trip->daily_distance_km * model.consumption_kwh_per_km;
      if (energy > model.battery_kwh) energy = (1.0 - unit(rng)) * model.battery_kwh;
      out.push_back(make_request(next_id++, hid, static_cast<int>(s), static_cast<int>(e), energy,
                                 grid));
    }
  }
  return out;
}

RepairResult repair_infeasible(std::vector<ChargingRequest> requests) {
  RepairResult res;
  res.input_count = static_cast<int>(requests.size());
  std::stable_sort(requests.begin(), requests.end(), [](const auto& a, const auto& b) {
    return a.household_id != b.household_id ? a.household_id < b.household_id
                                             : a.start_step < b.start_step;
  });
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<ChargingRequest> kept;
    kept.reserve(requests.size());
    for (const auto& r : requests) {
      if (r.feasible()) {
        kept.push_back(r);
        continue;
      }
      changed = true;
      ++res.removed;
      if (!kept.empty() && kept.back().household_id == r.household_id) {
        kept.back().end_step = r.end_step;
      } else {
        res.warnings.push_back(fmt::format(
            "request {} of household {} is infeasible and has no predecessor; dropped", r.id,
            r.household_id));
      }
    }
    requests = std::move(kept);
  }
  res.requests = std::move(requests);
  return res;
}

Scenario synthesize(const SynthConfig& config) {
  config.validate();
  Scenario sc;
  sc.grid = TimeGrid{config.start_epoch, config.step_seconds, 0};
  sc.grid.n_steps = config.days * sc.grid.steps_per_day();
  sc.ev_catalog = config.ev_catalog;

  std::mt19937_64 rng(config.rng_seed);
  std::vector<int> ev_ids;
  for (int i = 0; i < config.n_ev_households; ++i) {
    sc.households.push_back({i, true});
    sc.baseline_kw.push_back(household_series(config, sc.grid, rng));
    ev_ids.push_back(i);
  }
  if (config.plain_mode == PlainMode::Individual) {
    for (int i = 0; i < config.n_plain_households; ++i) {
      sc.households.push_back({config.n_ev_households + i, false});
      sc.baseline_kw.push_back(household_series(config, sc.grid, rng));
    }
  } else {
    std::vector<double> acc(static_cast<std::size_t>(sc.grid.n_steps), 0.0);
    for (int i = 0; i < config.aggregate_pool_size; ++i) {
      const auto s = household_series(config, sc.grid, rng);
      for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += s[t];
    }
    const double f = static_cast<double>(config.n_plain_households) / config.aggregate_pool_size;
    for (double& v : acc) v *= f;
    sc.households.push_back({config.n_ev_households, false});
    sc.baseline_kw.push_back(std::move(acc));
  }

  const auto trips = synthesize_trips(config, ev_ids, rng);
  auto repaired = repair_infeasible(build_requests(trips, sc.ev_catalog, sc.grid, rng));
  sc.requests = std::move(repaired.requests);
  sc.validate();
  return sc;
}

ConsumptionData ingest_consumption_csv(const std::filesystem::path& path, int step_seconds,
                                       double max_missing_fraction) {
  csv::Reader reader(path);
  reader.header({"timestamp", "household_id", "kwh"});
  struct Row {
    std::int64_t ts;
    double kwh;
  };
  std::map<int, std::vector<Row>> rows;
  std::vector<std::string_view> f;
  std::int64_t first = INT64_MAX, last = INT64_MIN;
  while (reader.next_row(f)) {
    if (f.size() != 3) reader.fail("expected 3 columns");
    const auto ts = parse_iso8601(f[0]);
    if (!ts) reader.fail("bad timestamp '" + std::string(f[0]) + "'");
    const int hid = static_cast<int>(reader.to_int(f[1], "household_id"));
    const double kwh = reader.to_double(f[2], "kwh");
    if (!std::isfinite(kwh) || kwh < 0.0) reader.fail("kwh must be finite and non-negative");
    auto& series = rows[hid];
    if (!series.empty() && *ts <= series.back().ts)
      reader.fail(fmt::format("non-monotone timestamp for household {}", hid));
    series.push_back({*ts, kwh});
    first = std::min(first, *ts);
    last = std::max(last, *ts);
  }
  if (rows.empty()) throw ParseError(path.string(), reader.line(), "no data rows");

  ConsumptionData out;
  out.grid.start_epoch = first;
  out.grid.step_seconds = step_seconds;
  if (step_seconds <= 0 || kSecondsPerDay % step_seconds != 0)
    throw ConfigError(fmt::format("step_seconds={} does not divide a day", step_seconds));
  if ((last - first) % step_seconds != 0)
    throw ParseError(path.string(), 0, "timestamps do not align to the step grid");
  out.grid.n_steps = static_cast<int>((last - first) / step_seconds) + 1;
  out.grid.validate();
  const double dh = out.grid.step_hours();
  const std::size_t n = static_cast<std::size_t>(out.grid.n_steps);

  for (const auto& [hid, series] : rows) {
    std::vector<double> kw(n, std::nan(""));
    for (const auto& r : series) {
      if ((r.ts - first) % step_seconds != 0)
        throw ParseError(path.string(), 0,
                         fmt::format("household {} timestamp off the step grid", hid));
      kw[static_cast<std::size_t>((r.ts - first) / step_seconds)] = r.kwh / dh;
    }
    const std::size_t missing = n - series.size();
    if (static_cast<double>(missing) > max_missing_fraction * static_cast<double>(n)) {
      out.rejected_households.push_back(hid);
      continue;
    }
    // Linear interpolation across gaps, nearest value at the ends.
    std::size_t t = 0;
    while (t < n) {
      if (!std::isnan(kw[t])) {
        ++t;
        continue;
      }
      std::size_t j = t;
      while (j < n && std::isnan(kw[j])) ++j;
      const bool has_left = t > 0, has_right = j < n;
      for (std::size_t k = t; k < j; ++k) {
        if (has_left && has_right) {
          const double w = static_cast<double>(k - t + 1) / static_cast<double>(j - t + 1);
          kw[k] = (1.0 - w) * kw[t - 1] + w * kw[j];
        } else {
          kw[k] = has_left ? kw[t - 1] : kw[j];
        }
      }
      out.interpolated_steps += static_cast<int>(j - t);
      t = j;
    }
    out.household_ids.push_back(hid);
    out.series_kw.push_back(std::move(kw));
  }
  return out;
}

TripsData ingest_trips_csv(const std::filesystem::path& path) {
  csv::Reader reader(path);
  reader.header({"household_id", "day_index", "first_departure_s", "last_arrival_s", "distance_km"});
  TripsData out;
  std::vector<std::string_view> f;
  while (reader.next_row(f)) {
    if (f.size() != 5) reader.fail("expected 5 columns");
    TripRecord t;
    t.household_id = static_cast<int>(reader.to_int(f[0], "household_id"));
    t.day_index = static_cast<int>(reader.to_int(f[1], "day_index"));
    t.first_departure = static_cast<int>(reader.to_int(f[2], "first_departure_s"));
    t.last_arrival = static_cast<int>(reader.to_int(f[3], "last_arrival_s"));
    t.daily_distance_km = reader.to_double(f[4], "distance_km");
    if (t.first_departure < 0 || t.last_arrival > kSecondsPerDay || t.day_index < 0)
      reader.fail("time of day out of range");
    if (!t.valid()) {
      ++out.rejected_rows;
      continue;
    }
    out.trips.push_back(t);
  }
  return out;
}

Scenario ingest_scenario(const std::filesystem::path& consumption_csv,
                         const std::filesystem::path& trips_csv, const IngestOptions& options,
                         std::vector<std::string>* warnings) {
  if (options.ev_catalog.empty()) throw ConfigError("empty EV catalog");
  auto consumption = ingest_consumption_csv(consumption_csv, options.step_seconds);
  auto trips = ingest_trips_csv(trips_csv);
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };
  for (int hid : consumption.rejected_households)
    warn(fmt::format("household {} rejected: too many missing steps", hid));
  if (trips.rejected_rows > 0)
    warn(fmt::format("{} trip rows rejected: departure not before arrival", trips.rejected_rows));

  std::set<int> known(consumption.household_ids.begin(), consumption.household_ids.end());
  std::set<int> ev;
  std::vector<TripRecord> usable;
  for (const auto& t : trips.trips) {
    if (!known.count(t.household_id)) {
      warn(fmt::format("trip for unknown household {} ignored", t.household_id));
      continue;
    }
    ev.insert(t.household_id);
    usable.push_back(t);
  }

  Scenario sc;
  sc.grid = consumption.grid;
  sc.ev_catalog = options.ev_catalog;
  for (std::size_t i = 0; i < consumption.household_ids.size(); ++i) {
    const int hid = consumption.household_ids[i];
    sc.households.push_back({hid, ev.count(hid) > 0});
    sc.baseline_kw.push_back(std::move(consumption.series_kw[i]));
  }
  std::mt19937_64 rng(options.rng_seed);
  auto repaired = repair_infeasible(build_requests(usable, sc.ev_catalog, sc.grid, rng));
  for (auto& w : repaired.warnings) warn(std::move(w));
  sc.requests = std::move(repaired.requests);
  sc.validate();
  return sc;
}

}  // namespace evcharge
