#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "evcharge/core.hpp"
#include "evcharge/scenario.hpp"

namespace fixture {

/// Households with the given baselines; household i has id i and an EV when
/// it owns a request.
inline evcharge::Scenario scenario(std::vector<std::vector<double>> baselines,
                                   std::vector<evcharge::ChargingRequest> requests,
                                   int step_seconds = 1800,
                                   std::int64_t start_epoch = 1357516800) {
  evcharge::Scenario sc;
  sc.grid.start_epoch = start_epoch;
  sc.grid.step_seconds = step_seconds;
  sc.grid.n_steps = static_cast<int>(baselines.front().size());
  for (std::size_t i = 0; i < baselines.size(); ++i) {
    bool ev = false;
    for (const auto& r : requests) ev = ev || r.household_id == static_cast<int>(i);
    sc.households.push_back({static_cast<int>(i), ev});
  }
  sc.baseline_kw = std::move(baselines);
  sc.requests = std::move(requests);
  sc.ev_catalog = evcharge::default_ev_catalog();
  sc.validate();
  return sc;
}

/// A small synthetic neighborhood, quick enough for unit tests.
inline evcharge::Scenario small_synthetic(std::uint64_t seed = 3, int days = 4) {
  evcharge::SynthConfig cfg;
  cfg.n_ev_households = 4;
  cfg.n_plain_households = 3;
  cfg.days = days;
  cfg.rng_seed = seed;
  return evcharge::synthesize(cfg);
}

/// Desk-scale scenario used by the acceptance criteria.
inline evcharge::Scenario desk() {
  evcharge::SynthConfig cfg;
  cfg.rng_seed = 1;
  return evcharge::synthesize(cfg);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("evcharge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
