#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "evcharge/controllers.hpp"
#include "evcharge/core.hpp"
#include "evcharge/features.hpp"

namespace evcharge {

struct SimResult {
  Schedule schedule;                             // realized charging, kWh per step
  std::vector<double> total_kw;                  // neighborhood meter
  std::vector<std::vector<double>> household_kw;  // parallel to scenario.households
  std::map<int, std::vector<double>> raw_outputs;  // per request, controller output in [0,1]
};

struct SimOptions {
  bool record_households = true;
  bool record_raw = true;
};

/// What a decision looked like, reported to an observer before the step it
/// controls is realized.
struct DecisionRecord {
  int household_id = 0;
  int request_id = 0;
  int step = 0;  // the step being decided
  std::span<const double> features;
  double energy_kwh = 0.0;
};

using DecisionObserver = std::function<void(const DecisionRecord&)>;

/// Steps the neighborhood with the same controller in every EV household.
/// Charging for step k is decided at the end of step k-1 from data up to k-1.
SimResult run(const Scenario& scenario, const Controller& controller,
              const SimOptions& options = {});

/// Per-household controllers keyed by household id; every EV household needs one.
SimResult run(const Scenario& scenario, const std::map<int, Controller>& controllers,
              const SimOptions& options = {});

/// Same stepping and history bookkeeping, but charging comes from `schedule`.
SimResult run_forced(const Scenario& scenario, const Schedule& schedule,
                     const SimOptions& options = {});

/// As above, also reporting every decision with features built for `layout`.
SimResult run_forced(const Scenario& scenario, const Schedule& schedule,
                     const FeatureLayout& layout, const DecisionObserver& observer,
                     const SimOptions& options = {});

}  // namespace evcharge
