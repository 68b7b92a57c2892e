#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "evcharge/error.hpp"
#include "evcharge/eval.hpp"
#include "evcharge/io.hpp"
#include "evcharge/relax.hpp"
#include "evcharge/sim.hpp"
#include "fixtures.hpp"

using namespace evcharge;

namespace {

// Order-statistic definition: x_(floor(q)) + frac(q) * (x_(floor(q)+1) - x_(floor(q))), q = p(n-1)/100.
double order_statistic_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double q = p * static_cast<double>(v.size() - 1) / 100.0;
  const double lo = std::floor(q);
  if (lo + 1 >= static_cast<double>(v.size())) return v.back();
  return v[static_cast<std::size_t>(lo)] +
         (q - lo) * (v[static_cast<std::size_t>(lo) + 1] - v[static_cast<std::size_t>(lo)]);
}

TimeGrid grid_of(int n) { return TimeGrid{1357516800, 3600, n}; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("a constant series has zero spread") {
  const std::vector<double> v(48, 3.5);
  const auto m = metrics(v, grid_of(48));
  CHECK(m.objective == 0.0);
  CHECK(m.min_kw == 3.5);
  CHECK(m.max_kw == 3.5);
  CHECK(m.p2_5_kw == 3.5);
  CHECK(m.p97_5_kw == 3.5);
}

TEST_CASE("the warm-up day is excluded") {
  std::vector<double> v(48, 1.0);
  for (int t = 0; t < 24; ++t) v[static_cast<std::size_t>(t)] = 100.0 * t;
  const auto m = metrics(v, grid_of(48));
  CHECK(m.window_begin == 24);
  CHECK(m.window_end == 48);
  CHECK(m.objective == 0.0);
  CHECK(m.max_kw == 1.0);
}

TEST_CASE("percentiles follow linear interpolation") {
  const std::vector<double> v{40, 10, 30, 20};
  CHECK(percentile(v, 0) == 10);
  CHECK(percentile(v, 100) == 40);
  CHECK(percentile(v, 50) == doctest::Approx(25.0));
  CHECK(percentile(v, 2.5) == doctest::Approx(10.75));
  CHECK(percentile(v, 97.5) == doctest::Approx(39.25));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(1 + trial % 17);
    for (double& x : s) x = u(rng);
    for (double p : {0.0, 2.5, 33.3, 50.0, 97.5, 100.0})
      CHECK(percentile(s, p) == doctest::Approx(order_statistic_percentile(s, p)).epsilon(1e-14));
  }
}

TEST_CASE("metrics reject short or mismatched series") {
  CHECK_THROWS_AS(metrics(std::vector<double>(30, 1.0), grid_of(30)), ContractError);
  CHECK_THROWS_AS(metrics(std::vector<double>(48, 1.0), grid_of(50)), ContractError);
  CHECK_THROWS_AS(percentile({}, 50), ContractError);
}

TEST_CASE("objective is the population std of the window") {
  std::vector<double> v(48, 0.0);
  for (int t = 24; t < 48; ++t) v[static_cast<std::size_t>(t)] = t % 2 ? 3.0 : 1.0;
  CHECK(metrics(v, grid_of(48)).objective == doctest::Approx(1.0));
}

TEST_CASE("the full-window objective equals the relaxation objective") {
  const auto sc = fixture::small_synthetic(7, 3);
  const auto opt = solve(sc, RelaxConfig{});
  const auto load = run_forced(sc, opt.schedule).total_kw;
  const double sd = metrics_over(load, 0, sc.grid.n_steps).objective;
  CHECK(std::abs(sd * sd - opt.objective_value) <= 1e-9 * std::max(1.0, opt.objective_value));
}

TEST_CASE("feasibility violations are counted") {
  const auto sc = fixture::small_synthetic(7, 3);
  const auto opt = solve(sc, RelaxConfig{});
  CHECK(feasibility_violations(sc, opt.schedule) == 0);
  auto bad = opt.schedule;
  bad.rows.begin()->second[0] += 0.01;
  CHECK(feasibility_violations(sc, bad) == 1);
  bad = opt.schedule;
  bad.rows.erase(bad.rows.begin());
  CHECK(feasibility_violations(sc, bad) == 1);
  bad = opt.schedule;
  bad.rows[9999] = {0.0};
  CHECK(feasibility_violations(sc, bad) == 1);
}

TEST_CASE("compare groups rows and the QP row leads") {
  const auto sc = fixture::small_synthetic(8, 3);
  const auto opt = solve(sc, RelaxConfig{});
  std::vector<CompareEntry> entries;
  entries.push_back({"MAX", EntryGroup::Heuristic, std::nullopt, Controller::max(), {}});
  entries.push_back({"MAX again", EntryGroup::Heuristic, std::nullopt, Controller::max(), {}});
  entries.push_back({"CONST", EntryGroup::Heuristic, std::nullopt, Controller::constant(), {}});
  entries.push_back({"OPT", EntryGroup::Qp, opt.schedule, std::nullopt, {}});
  entries.push_back({"MIN", EntryGroup::Heuristic, std::nullopt, Controller::min(), {}});
  const auto rows = compare(sc, entries, {});
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].label == "OPT");
  CHECK(rows[1].label == "MAX");
  CHECK(rows[2].label == "MAX again");
  CHECK(rows[3].label == "CONST");
  CHECK(rows[4].label == "MIN");
  CHECK(rows[1].objective_mean == rows[2].objective_mean);
  CHECK(rows[1].objective_std == 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[0].objective_mean <= rows[i].objective_mean + 1e-9);
  CHECK(rows[0].total_kw.size() == static_cast<std::size_t>(sc.grid.n_steps));
}

TEST_CASE("stochastic entries run once per seed and reproduce") {
  const auto sc = fixture::small_synthetic(8, 3);
  std::vector<CompareEntry> entries(1);
  entries[0].label = "CMA";
  entries[0].group = EntryGroup::Direct;
  entries[0].trainer = [&](std::uint64_t seed) {
    CmaConfig cfg;
    cfg.generations = 2;
    cfg.population = 6;
    cfg.seed = seed;
    return cma_controller(sc, {ControllerType::H, true}, 3, cfg);
  };
  const auto seeds = repetition_seeds(4, 3);
  CHECK(seeds == std::vector<std::uint64_t>{4000, 4001, 4002});
  const auto a = compare(sc, entries, seeds);
  const auto b = compare(sc, entries, seeds);
  REQUIRE(a.size() == 1);
  CHECK(a[0].runs == 3);
  CHECK(a[0].objectives == b[0].objectives);
  CHECK(report_json(a) == report_json(b));
  double mean = 0.0;
  for (double v : a[0].objectives) mean += v / 3.0;
  double var = 0.0;
  for (double v : a[0].objectives) var += (v - mean) * (v - mean) / 2.0;
  CHECK(a[0].objective_mean == doctest::Approx(mean).epsilon(1e-14));
  CHECK(a[0].objective_std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("compare rejects malformed entries") {
  const auto sc = fixture::small_synthetic(8, 3);
  std::vector<CompareEntry> dup{{"A", EntryGroup::Heuristic, std::nullopt, Controller::max(), {}},
                                {"A", EntryGroup::Heuristic, std::nullopt, Controller::min(), {}}};
  CHECK_THROWS_AS(compare(sc, dup, {}), ConfigError);
  std::vector<CompareEntry> none{{"A", EntryGroup::Heuristic, std::nullopt, std::nullopt, {}}};
  CHECK_THROWS_AS(compare(sc, none, {}), ConfigError);
  auto bad = solve(sc, RelaxConfig{}).schedule;
  bad.rows.begin()->second[0] += 1e-3;
  std::vector<CompareEntry> infeasible{{"BAD", EntryGroup::Qp, bad, std::nullopt, {}}};
  CHECK_THROWS_AS(compare(sc, infeasible, {}), InfeasibleError);
}

TEST_CASE("report and plot formats") {
  const auto sc = fixture::small_synthetic(8, 3);
  std::vector<CompareEntry> entries{{"MAX, fast", EntryGroup::Heuristic, std::nullopt, Controller::max(), {}}};
  const auto rows = compare(sc, entries, {});
  const auto doc = nlohmann::json::parse(report_json(rows));
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 1);
  for (const char* key : {"label", "objective_mean", "objective_std", "min", "p2_5", "p97_5", "max"})
    CHECK(doc[0].contains(key));
  CHECK(doc[0]["label"] == "MAX, fast");
  CHECK(doc[0]["objective_mean"].get<double>() == rows[0].objective_mean);

  const auto csv = plot_csv(rows, sc.grid);
  CHECK(csv.rfind("step,timestamp,label,total_kw\n", 0) == 0);
  CHECK(csv.find("0,2013-01-07T00:00:00Z,\"MAX, fast\",") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == sc.grid.n_steps + 1);
}

TEST_CASE("comparison spec files") {
  const auto dir = fixture::temp_dir("eval_spec");
  const auto sc = fixture::small_synthetic(8, 3);
  save_scenario(sc, dir / "scn.json");
  write_text_file(dir / "spec.json", R"({
    "scenario": "scn.json",
    "entries": [
      {"label": "MIN", "kind": "controller", "controller": "min"},
      {"label": "OPT", "kind": "relax"},
      {"label": "OPT-ST", "kind": "relax", "lambda": 0.1},
      {"label": "CMA", "kind": "cma", "type": "h", "hidden": 2, "population": 4, "generations": 1}
    ]})");
  const auto spec = load_compare_spec(dir / "spec.json");
  REQUIRE(spec.entries.size() == 4);
  CHECK(spec.entries[1].group == EntryGroup::Qp);
  CHECK(spec.entries[1].schedule.has_value());
  CHECK(spec.entries[3].stochastic());
  const auto rows = compare(spec.scenario, spec.entries, {1});
  CHECK(rows[0].label == "OPT");
  CHECK(rows[1].label == "OPT-ST");
  CHECK(rows[0].objective_mean <= rows[1].objective_mean + 1e-9);

  write_text_file(dir / "bad.json", R"({"scenario": "scn.json", "entries": [{"label": "x", "kind": "magic"}]})");
  CHECK_THROWS_AS(load_compare_spec(dir / "bad.json"), ConfigError);
  write_text_file(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_compare_spec(dir / "broken.json"), ParseError);
}

}
