#include "doctest.h"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "evcharge/error.hpp"
#include "evcharge/io.hpp"
#include "evcharge/scenario.hpp"
#include "fixtures.hpp"

using namespace evcharge;

namespace {

TripRecord trip(int hid, int day, int dep_h, int arr_h, double km) {
  return {hid, day, dep_h * 3600, arr_h * 3600, km};
}

std::vector<EvModel> one_model(double battery, double per_km) { return {{"m", battery, per_km}}; }

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("synthesis is deterministic and sized by the config") {
  SynthConfig cfg;
  cfg.days = 14;
  const auto a = synthesize(cfg), b = synthesize(cfg);
  CHECK(a.grid.n_steps == 672);
  CHECK(a.households.size() == 20);
  CHECK(a.baseline_kw.size() == 20);
  CHECK(scenario_to_json(a).dump() == scenario_to_json(b).dump());
  cfg.rng_seed = 2;
  CHECK(scenario_to_json(synthesize(cfg)).dump() != scenario_to_json(a).dump());
}

TEST_CASE("noise-free baseline repeats the daily profile") {
  SynthConfig cfg;
  cfg.days = 3;
  cfg.profile.noise_scale = 0.0;
  const auto sc = synthesize(cfg);
  for (const auto& series : sc.baseline_kw)
    for (int t = 0; t < sc.grid.n_steps; ++t)
      CHECK(series[static_cast<std::size_t>(t)] ==
            daily_profile_kw(cfg.profile, sc.grid.seconds_of_day(t)));
}

TEST_CASE("daily profile has a morning and an evening peak") {
  const BaselineProfile p;
  auto at = [&](double h) { return daily_profile_kw(p, static_cast<int>(h * 3600)); };
  CHECK(at(7.5) > at(4.0));
  CHECK(at(7.5) > at(12.0));
  CHECK(at(19.0) > at(12.0));
  CHECK(at(19.0) > at(7.5));
  CHECK(at(19.0) > at(23.5));
}

TEST_CASE("aggregate plain mode keeps one scaled record") {
  SynthConfig cfg;
  cfg.days = 2;
  cfg.plain_mode = PlainMode::Aggregate;
  cfg.profile.noise_scale = 0.0;
  const auto sc = synthesize(cfg);
  CHECK(sc.households.size() == 11);
  CHECK_FALSE(sc.households.back().has_ev);
  CHECK(sc.baseline_kw.back()[10] == doctest::Approx(10 * daily_profile_kw(cfg.profile, 5 * 3600)));
}

TEST_CASE("synthesized requests satisfy the request invariants") {
  const auto sc = fixture::desk();
  CHECK(sc.requests.size() > 150);
  std::set<int> ids;
  for (const auto& r : sc.requests) {
    CHECK(r.feasible());
    CHECK(r.length() >= 1);
    CHECK(r.energy_kwh >= 0.0);
    CHECK(sc.households[static_cast<std::size_t>(sc.household_index(r.household_id))].has_ev);
    ids.insert(r.id);
  }
  CHECK(ids.size() == sc.requests.size());
}

TEST_CASE("request energy is distance times consumption") {
  TimeGrid g{1357516800, 1800, 48 * 3};
  std::mt19937_64 rng(1);
  const auto reqs =
      build_requests({trip(0, 0, 8, 18, 0.0), trip(0, 1, 7, 17, 30.0), trip(0, 2, 8, 18, 10.0)},
                     one_model(40.0, 0.2), g, rng);
  REQUIRE(reqs.size() == 2);
  CHECK(reqs[0].energy_kwh == 0.0);
  CHECK(reqs[1].energy_kwh == doctest::Approx(6.0));
  // Window from the day-0 arrival to the day-1 departure.
  CHECK(reqs[0].start_step == 36);
  CHECK(reqs[0].end_step == 48 + 14);
}

TEST_CASE("arrival rounds up and departure rounds down") {
  TimeGrid g{1357516800, 1800, 48 * 2};
  std::mt19937_64 rng(1);
  std::vector<TripRecord> t{{0, 0, 8 * 3600, 18 * 3600 + 60, 1.0}, {0, 1, 7 * 3600 + 1799, 18 * 3600, 1.0}};
  const auto reqs = build_requests(t, one_model(40.0, 0.2), g, rng);
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].start_step == 37);
  CHECK(reqs[0].end_step == 48 + 14);
}

TEST_CASE("energy beyond the battery is redrawn within the battery") {
  TimeGrid g{1357516800, 1800, 48 * 30};
  std::mt19937_64 rng(4);
  std::vector<TripRecord> t;
  for (int d = 0; d < 29; ++d) t.push_back(trip(0, d, 7, 18, 400.0));
  const auto reqs = build_requests(t, one_model(40.0, 0.2), g, rng);
  REQUIRE(reqs.size() == 28);
  double lo = 1e9, hi = 0.0;
  for (const auto& r : reqs) {
    CHECK(r.energy_kwh > 0.0);
    CHECK(r.energy_kwh <= 40.0);
    lo = std::min(lo, r.energy_kwh);
    hi = std::max(hi, r.energy_kwh);
  }
  CHECK(hi - lo > 5.0);
}

TEST_CASE("an empty catalog is a configuration error") {
  TimeGrid g{0, 1800, 96};
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(build_requests({}, {}, g, rng), ConfigError);
}

TEST_CASE("repair leaves feasible requests alone") {
  TimeGrid g{0, 1800, 48};
  std::vector<ChargingRequest> in{make_request(0, 0, 0, 4, 3.0, g), make_request(1, 0, 10, 14, 1.0, g)};
  const auto res = repair_infeasible(in);
  CHECK(res.removed == 0);
  CHECK(res.requests.size() == 2);
  CHECK(res.removed_fraction() == 0.0);
}

TEST_CASE("repair removes an infeasible request and extends its predecessor") {
  TimeGrid g{0, 1800, 48};
  // 10 kWh over 2 steps of 1.5 kWh cannot be met.
  std::vector<ChargingRequest> in{make_request(0, 0, 0, 4, 3.0, g), make_request(1, 0, 10, 12, 10.0, g),
                                  make_request(2, 1, 0, 2, 10.0, g)};
  const auto res = repair_infeasible(in);
  CHECK(res.removed == 2);
  REQUIRE(res.requests.size() == 1);
  CHECK(res.requests[0].id == 0);
  CHECK(res.requests[0].end_step == 12);
  CHECK(res.requests[0].energy_kwh == 3.0);
  CHECK(res.warnings.size() == 1);
  CHECK(res.removed_fraction() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("repair iterates until every request is feasible") {
  TimeGrid g{0, 1800, 48};
  std::vector<ChargingRequest> in{make_request(0, 0, 0, 2, 2.0, g), make_request(1, 0, 4, 5, 5.0, g),
                                  make_request(2, 0, 6, 7, 5.0, g)};
  const auto res = repair_infeasible(in);
  for (const auto& r : res.requests) CHECK(r.feasible());
  for (std::size_t i = 1; i < res.requests.size(); ++i)
    CHECK(res.requests[i - 1].end_step <= res.requests[i].start_step);
}

TEST_CASE("removal fraction stays small at scale") {
  SynthConfig cfg;
  cfg.n_ev_households = 50;
  cfg.days = 60;
  cfg.rng_seed = 8;
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  TimeGrid g{cfg.start_epoch, cfg.step_seconds, cfg.days * 48};
  std::vector<int> ids;
  for (int i = 0; i < cfg.n_ev_households; ++i) ids.push_back(i);
  const auto trips = synthesize_trips(cfg, ids, rng);
  const auto res = repair_infeasible(build_requests(trips, cfg.ev_catalog, g, rng));
  CHECK(res.input_count > 2500);
  CHECK(res.removed_fraction() < 0.02);
}

TEST_CASE("consumption CSV ingestion") {
  const auto dir = fixture::temp_dir("ingest");
  std::string text = "timestamp,household_id,kwh\n";
  const std::int64_t t0 = 1357516800;
  for (int k = 0; k < 4; ++k)
    for (int h : {1, 2})
      text += fmt::format("{},{},{}\n", format_iso8601(t0 + k * 1800), h, 0.5 + k * h);
  write_text_file(dir / "c.csv", text);
  const auto data = ingest_consumption_csv(dir / "c.csv");
  CHECK(data.grid.n_steps == 4);
  CHECK(data.grid.start_epoch == t0);
  REQUIRE(data.household_ids == std::vector<int>{1, 2});
  CHECK(data.series_kw[1][3] == doctest::Approx((0.5 + 6) / 0.5));
  CHECK(data.rejected_households.empty());
}

TEST_CASE("one missing step is linearly interpolated") {
  const auto dir = fixture::temp_dir("ingest_gap");
  std::string text = "timestamp,household_id,kwh\n";
  const std::int64_t t0 = 1357516800;
  const int n = 400;
  for (int k = 0; k < n; ++k)
    if (k != 200) text += fmt::format("{},7,{}\n", format_iso8601(t0 + k * 1800), k % 2 ? 1.0 : 2.0);
  write_text_file(dir / "c.csv", text);
  const auto data = ingest_consumption_csv(dir / "c.csv");
  REQUIRE(data.series_kw.size() == 1);
  CHECK(data.interpolated_steps == 1);
  CHECK(data.series_kw[0][200] == doctest::Approx(0.5 * (data.series_kw[0][199] + data.series_kw[0][201])));
}

TEST_CASE("households with too many gaps are rejected") {
  const auto dir = fixture::temp_dir("ingest_reject");
  std::string text = "timestamp,household_id,kwh\n";
  const std::int64_t t0 = 1357516800;
  for (int k = 0; k < 100; ++k) {
    text += fmt::format("{},1,1\n", format_iso8601(t0 + k * 1800));
    if (k % 10) text += fmt::format("{},2,1\n", format_iso8601(t0 + k * 1800));
  }
  write_text_file(dir / "c.csv", text);
  const auto data = ingest_consumption_csv(dir / "c.csv");
  CHECK(data.household_ids == std::vector<int>{1});
  CHECK(data.rejected_households == std::vector<int>{2});
}

TEST_CASE("malformed consumption rows report their line") {
  const auto dir = fixture::temp_dir("ingest_bad");
  write_text_file(dir / "a.csv",
                  "timestamp,household_id,kwh\n2013-01-07T00:00:00Z,1,1\n2013-01-07T00:30:00Z,1\n");
  try {
    ingest_consumption_csv(dir / "a.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_text_file(dir / "b.csv",
                  "timestamp,household_id,kwh\n2013-01-07T00:30:00Z,1,1\n2013-01-07T00:00:00Z,1,1\n");
  CHECK_THROWS_AS(ingest_consumption_csv(dir / "b.csv"), ParseError);
  write_text_file(dir / "c.csv", "time,household,kwh\n");
  CHECK_THROWS_AS(ingest_consumption_csv(dir / "c.csv"), ParseError);
}

TEST_CASE("trip CSV ingestion rejects inverted days") {
  const auto dir = fixture::temp_dir("ingest_trips");
  write_text_file(dir / "t.csv",
                  "household_id,day_index,first_departure_s,last_arrival_s,distance_km\n"
                  "1,0,28800,64800,12.5\n1,1,70000,60000,3\n1,2,25200,63000,40\n");
  const auto data = ingest_trips_csv(dir / "t.csv");
  CHECK(data.trips.size() == 2);
  CHECK(data.rejected_rows == 1);
  CHECK(data.trips[1].daily_distance_km == 40.0);
}

TEST_CASE("ingested scenario marks trip households as EV owners") {
  const auto dir = fixture::temp_dir("ingest_scn");
  std::string c = "timestamp,household_id,kwh\n";
  const std::int64_t t0 = 1357516800;
  for (int k = 0; k < 48 * 3; ++k)
    for (int h : {1, 2, 3}) c += fmt::format("{},{},0.3\n", format_iso8601(t0 + k * 1800), h);
  write_text_file(dir / "c.csv", c);
  write_text_file(dir / "t.csv",
                  "household_id,day_index,first_departure_s,last_arrival_s,distance_km\n"
                  "2,0,28800,64800,20\n2,1,28800,64800,20\n2,2,28800,64800,20\n"
                  "9,0,28800,64800,20\n");
  std::vector<std::string> warnings;
  const auto sc = ingest_scenario(dir / "c.csv", dir / "t.csv", IngestOptions{}, &warnings);
  CHECK(sc.households.size() == 3);
  CHECK(sc.households[1].has_ev);
  CHECK_FALSE(sc.households[0].has_ev);
  CHECK(sc.requests.size() == 2);
  CHECK(warnings.size() == 1);
}

}
