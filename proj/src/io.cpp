#include "evcharge/io.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "csv.hpp"
#include "evcharge/error.hpp"

namespace evcharge {

using nlohmann::json;

std::string format_iso8601(std::int64_t epoch) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{epoch}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

std::optional<std::int64_t> parse_iso8601(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s,
                  &consumed) != 7)
    return std::nullopt;
  if (sep != 'T' && sep != ' ') return std::nullopt;
  const std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days_since) * kSecondsPerDay + h * 3600 + mi * 60 + s;
}

std::string format_double(double v) { return fmt::format("{}", v); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json scenario_to_json(const Scenario& scenario) {
  json doc;
  doc["format_version"] = kScenarioFormatVersion;
  doc["grid"] = {{"start_epoch", scenario.grid.start_epoch},
                 {"step_seconds", scenario.grid.step_seconds},
                 {"n_steps", scenario.grid.n_steps}};
  json households = json::array();
  for (std::size_t h = 0; h < scenario.households.size(); ++h)
    households.push_back({{"id", scenario.households[h].id},
                          {"has_ev", scenario.households[h].has_ev},
                          {"baseline_kw", scenario.baseline_kw[h]}});
  doc["households"] = std::move(households);
  json requests = json::array();
  for (const auto& r : scenario.requests)
    requests.push_back({{"id", r.id},
                        {"household_id", r.household_id},
                        {"start_step", r.start_step},
                        {"end_step", r.end_step},
                        {"energy_kwh", r.energy_kwh},
                        {"max_power_kw", r.max_power_kw}});
  doc["requests"] = std::move(requests);
  json catalog = json::array();
  for (const auto& m : scenario.ev_catalog)
    catalog.push_back({{"model", m.name},
                       {"battery_kwh", m.battery_kwh},
                       {"consumption_kwh_per_km", m.consumption_kwh_per_km}});
  doc["ev_catalog"] = std::move(catalog);
  return doc;
}

Scenario scenario_from_json(const json& doc) {
  Scenario s;
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kScenarioFormatVersion)
      throw StructuralError(fmt::format("unsupported scenario format_version {}", version));
    const auto& g = doc.at("grid");
    s.grid.start_epoch = g.at("start_epoch").get<std::int64_t>();
    s.grid.step_seconds = g.at("step_seconds").get<int>();
    s.grid.n_steps = g.at("n_steps").get<int>();
    s.grid.validate();
    for (const auto& h : doc.at("households")) {
      s.households.push_back({h.at("id").get<int>(), h.at("has_ev").get<bool>()});
      s.baseline_kw.push_back(h.at("baseline_kw").get<std::vector<double>>());
    }
    for (const auto& r : doc.at("requests"))
      s.requests.push_back(make_request(r.at("id").get<int>(), r.at("household_id").get<int>(),
                                        r.at("start_step").get<int>(), r.at("end_step").get<int>(),
                                        r.at("energy_kwh").get<double>(), s.grid,
                                        r.value("max_power_kw", kDefaultMaxPowerKw)));
    for (const auto& m : doc.at("ev_catalog"))
      s.ev_catalog.push_back({m.at("model").get<std::string>(), m.at("battery_kwh").get<double>(),
                              m.at("consumption_kwh_per_km").get<double>()});
  } catch (const json::exception& e) {
    throw StructuralError(std::string("malformed scenario document: ") + e.what());
  }
  s.validate();
  return s;
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_text_file(path, scenario_to_json(scenario).dump(1) + "\n");
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

void save_schedule_csv(const Scenario& scenario, const Schedule& schedule,
                       const std::filesystem::path& path) {
  std::string out = "request_id,step,kwh\n";
  for (const auto& [id, row] : schedule.rows) {
    const ChargingRequest& r = scenario.request(id);
    for (std::size_t k = 0; k < row.size(); ++k)
      out += fmt::format("{},{},{}\n", id, r.start_step + static_cast<int>(k), row[k]);
  }
  write_text_file(path, out);
}

Schedule load_schedule_csv(const Scenario& scenario, const std::filesystem::path& path) {
  csv::Reader reader(path);
  reader.header({"request_id", "step", "kwh"});
  Schedule sched = zero_schedule(scenario);
  std::map<int, const ChargingRequest*> by_id;
  for (const auto& r : scenario.requests) by_id[r.id] = &r;
  std::vector<std::string_view> f;
  while (reader.next_row(f)) {
    if (f.size() != 3) reader.fail("expected 3 columns");
    const int id = static_cast<int>(reader.to_int(f[0], "request_id"));
    const int step = static_cast<int>(reader.to_int(f[1], "step"));
    const double kwh = reader.to_double(f[2], "kwh");
    auto it = by_id.find(id);
    if (it == by_id.end()) reader.fail(fmt::format("unknown request id {}", id));
    if (!it->second->active_at(step))
      reader.fail(fmt::format("step {} outside window of request {}", step, id));
    sched.rows[id][static_cast<std::size_t>(step - it->second->start_step)] = kwh;
  }
  return sched;
}

void save_load_csv(const TimeGrid& grid, const std::vector<double>& total_kw,
                   const std::filesystem::path& path) {
  std::string out = "step,timestamp,total_kw\n";
  for (std::size_t t = 0; t < total_kw.size(); ++t)
    out += fmt::format("{},{},{}\n", t, format_iso8601(grid.epoch_at(static_cast<int>(t))),
                       total_kw[t]);
  write_text_file(path, out);
}

}  // namespace evcharge
