#include "evcharge/core.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "evcharge/error.hpp"

namespace evcharge {

void TimeGrid::validate() const {
  if (step_seconds <= 0 || kSecondsPerDay % step_seconds != 0)
    throw ConfigError(fmt::format("step_seconds={} does not divide a day", step_seconds));
  if (n_steps <= 0) throw ConfigError("n_steps must be positive");
}

int TimeGrid::seconds_of_day(int step) const {
  const std::int64_t s = epoch_at(step) % kSecondsPerDay;
  return static_cast<int>(s < 0 ? s + kSecondsPerDay : s);
}

int TimeGrid::weekday(int step) const {
  std::int64_t e = epoch_at(step);
  std::int64_t day = e >= 0 ? e / kSecondsPerDay : (e - kSecondsPerDay + 1) / kSecondsPerDay;
  std::int64_t w = (day + 4) % 7;
  return static_cast<int>(w < 0 ? w + 7 : w);
}

ChargingRequest make_request(int id, int household_id, int start_step, int end_step,
                             double energy_kwh, const TimeGrid& grid, double max_power_kw) {
  ChargingRequest r;
  r.id = id;
  r.household_id = household_id;
  r.start_step = start_step;
  r.end_step = end_step;
  r.energy_kwh = energy_kwh;
  r.max_power_kw = max_power_kw;
  r.cap_kwh = max_power_kw * grid.step_hours();
  return r;
}

void Scenario::validate() const {
  grid.validate();
  if (baseline_kw.size() != households.size())
    throw StructuralError("baseline series count differs from household count");
  for (std::size_t h = 0; h < households.size(); ++h) {
    const auto& series = baseline_kw[h];
    if (static_cast<int>(series.size()) != grid.n_steps)
      throw StructuralError(fmt::format("household {} baseline has {} steps, grid has {}",
                                        households[h].id, series.size(), grid.n_steps));
    for (double v : series)
      if (!std::isfinite(v) || v < 0.0)
        throw StructuralError(fmt::format("household {} has invalid baseline value {}",
                                          households[h].id, v));
  }
  std::map<int, int> last_end;
  std::map<int, bool> seen_ids;
  for (const auto& r : requests) {
    if (seen_ids[r.id]) throw StructuralError(fmt::format("duplicate request id {}", r.id));
    seen_ids[r.id] = true;
    const int hi = household_index(r.household_id);
    if (hi < 0)
      throw StructuralError(fmt::format("request {} references unknown household {}", r.id,
                                        r.household_id));
    if (r.length() < 1 || r.start_step < 0 || r.end_step > grid.n_steps)
      throw StructuralError(fmt::format("request {} window [{}, {}) outside grid", r.id,
                                        r.start_step, r.end_step));
    if (!(r.energy_kwh >= 0.0) || !(r.max_power_kw > 0.0))
      throw StructuralError(fmt::format("request {} has invalid energy or power", r.id));
    if (std::abs(r.cap_kwh - r.max_power_kw * grid.step_hours()) > 1e-12)
      throw StructuralError(fmt::format("request {} cap_kwh out of sync", r.id));
    auto it = last_end.find(r.household_id);
    if (it != last_end.end() && r.start_step < it->second)
      throw StructuralError(fmt::format("request {} overlaps or is out of order", r.id));
    last_end[r.household_id] = r.end_step;
  }
}

int Scenario::household_index(int household_id) const {
  for (std::size_t i = 0; i < households.size(); ++i)
    if (households[i].id == household_id) return static_cast<int>(i);
  return -1;
}

const ChargingRequest& Scenario::request(int request_id) const {
  for (const auto& r : requests)
    if (r.id == request_id) return r;
  throw StructuralError(fmt::format("unknown request id {}", request_id));
}

std::vector<double> Scenario::baseline_total_kw() const {
  std::vector<double> total(static_cast<std::size_t>(grid.n_steps), 0.0);
  for (const auto& series : baseline_kw)
    for (std::size_t t = 0; t < total.size(); ++t) total[t] += series[t];
  return total;
}

Schedule zero_schedule(const Scenario& scenario) {
  Schedule s;
  for (const auto& r : scenario.requests)
    s.rows[r.id] = std::vector<double>(static_cast<std::size_t>(r.length()), 0.0);
  return s;
}

std::vector<double> total_load(const Scenario& scenario, const Schedule& schedule) {
  std::vector<double> load = scenario.baseline_total_kw();
  const double dh = scenario.grid.step_hours();
  std::map<int, const ChargingRequest*> by_id;
  for (const auto& r : scenario.requests) by_id[r.id] = &r;
  for (const auto& [id, row] : schedule.rows) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw StructuralError(fmt::format("schedule references unknown request id {}", id));
    const ChargingRequest& r = *it->second;
    if (static_cast<int>(row.size()) > r.length())
      throw StructuralError(fmt::format("schedule row {} longer than its window", id));
    for (std::size_t k = 0; k < row.size(); ++k)
      load[static_cast<std::size_t>(r.start_step) + k] += row[k] / dh;
  }
  return load;
}

ConservationCheck energy_conservation_check(const ChargingRequest& request,
                                            std::span<const double> row) {
  ConservationCheck c;
  const double sum = std::accumulate(row.begin(), row.end(), 0.0);
  c.residual = std::abs(sum - request.energy_kwh);
  bool bounds = static_cast<int>(row.size()) == request.length();
  for (double v : row)
    if (!(v >= -kBoundTol && v <= request.cap_kwh + kBoundTol)) bounds = false;
  c.ok = bounds && c.residual <= energy_tol(request.energy_kwh);
  return c;
}

}  // namespace evcharge
