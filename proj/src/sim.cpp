#include "evcharge/sim.hpp"

#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "evcharge/error.hpp"

namespace evcharge {

namespace {

struct Decision {
  double raw = 0.0;
  double energy = 0.0;
};

// Per EV household bookkeeping.
struct Lane {
  std::size_t household = 0;  // index into scenario.households
  std::vector<const ChargingRequest*> requests;
  std::size_t next = 0;  // first request not yet finished
  std::optional<RequestState> state;
  const ChargingRequest* pending_request = nullptr;
  Decision pending;
  bool wants_features = false;
  FeatureLayout layout;
};

// Policy signature: (lane index, request state, step, features) -> decision.
template <typename Policy>
SimResult step_through(const Scenario& sc, std::vector<Lane> lanes, Policy&& policy,
                       bool check_completion, const SimOptions& opt,
                       const DecisionObserver* observer) {
  const TimeGrid& grid = sc.grid;
  const int T = grid.n_steps;
  const double dh = grid.step_hours();
  const std::size_t H = sc.households.size();

  SimResult res;
  res.total_kw.assign(static_cast<std::size_t>(T), 0.0);
  if (opt.record_households)
    res.household_kw.assign(H, std::vector<double>(static_cast<std::size_t>(T), 0.0));
  for (const auto& r : sc.requests) {
    res.schedule.rows[r.id].assign(static_cast<std::size_t>(r.length()), 0.0);
    if (opt.record_raw) res.raw_outputs[r.id].assign(static_cast<std::size_t>(r.length()), 0.0);
  }

  bool any_features = false;
  for (const auto& lane : lanes) any_features = any_features || lane.wants_features;

  std::vector<ConsumptionHistory> house_hist;
  ConsumptionHistory grid_hist(grid.steps_per_day(), grid.step_seconds);
  if (any_features) {
    house_hist.assign(lanes.size(), ConsumptionHistory(grid.steps_per_day(), grid.step_seconds));
    double base0 = 0.0;
    for (std::size_t h = 0; h < H; ++h) base0 += sc.baseline_kw[h][0];
    grid_hist.reset(base0);
    for (std::size_t i = 0; i < lanes.size(); ++i)
      house_hist[i].reset(sc.baseline_kw[lanes[i].household][0]);
  }

  std::vector<double> features;
  features.reserve(20);

  auto decide_for = [&](int k) {
    std::optional<std::array<double, kConsumptionFeatures>> grid_f;
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      Lane& lane = lanes[i];
      lane.pending_request = nullptr;
      while (lane.next < lane.requests.size() && lane.requests[lane.next]->end_step <= k) {
        ++lane.next;
        lane.state.reset();
      }
      if (lane.next >= lane.requests.size()) continue;
      const ChargingRequest& r = *lane.requests[lane.next];
      if (!r.active_at(k)) continue;
      if (!lane.state || lane.state->request != &r) lane.state = RequestState::start(r);

      std::span<const double> fspan;
      if (lane.wants_features) {
        if (lane.layout.type == ControllerType::A && !grid_f) grid_f = consumption_features(grid_hist);
        const auto hf = consumption_features(house_hist[i]);
        const auto rf = request_features(r, lane.state->remaining_kwh, k, grid);
        assemble_features(lane.layout, hf, grid_f ? *grid_f : std::array<double, kConsumptionFeatures>{},
                          rf, features);
        fspan = features;
      }
      lane.pending = policy(i, *lane.state, k, fspan);
      lane.pending_request = &r;
      if (observer)
        (*observer)({sc.households[lane.household].id, r.id, k, fspan, lane.pending.energy});
    }
  };

  decide_for(0);
  std::vector<double> charge_kw(lanes.size(), 0.0);
  for (int t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    double total = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      total += sc.baseline_kw[h][ts];
      if (opt.record_households) res.household_kw[h][ts] = sc.baseline_kw[h][ts];
    }
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      Lane& lane = lanes[i];
      charge_kw[i] = 0.0;
      if (!lane.pending_request) continue;
      const ChargingRequest& r = *lane.pending_request;
      const auto k = static_cast<std::size_t>(t - r.start_step);
      res.schedule.rows[r.id][k] = lane.pending.energy;
      if (opt.record_raw) res.raw_outputs[r.id][k] = lane.pending.raw;
      lane.state->remaining_kwh -= lane.pending.energy;
      charge_kw[i] = lane.pending.energy / dh;
      total += charge_kw[i];
      if (opt.record_households) res.household_kw[lane.household][ts] += charge_kw[i];
      if (check_completion && r.end_step == t + 1 &&
          std::abs(lane.state->remaining_kwh) > 1e-9 * std::max(1.0, r.energy_kwh))
        throw InfeasibleError(fmt::format("request {} ended with {} kWh undelivered", r.id,
                                          lane.state->remaining_kwh));
    }
    res.total_kw[ts] = total;
    if (any_features) {
      grid_hist.push(total);
      for (std::size_t i = 0; i < lanes.size(); ++i)
        house_hist[i].push(sc.baseline_kw[lanes[i].household][ts] + charge_kw[i]);
    }
    if (t + 1 < T) decide_for(t + 1);
  }
  return res;
}

std::vector<Lane> make_lanes(const Scenario& sc) {
  std::vector<Lane> lanes;
  for (std::size_t h = 0; h < sc.households.size(); ++h) {
    Lane lane;
    lane.household = h;
    for (const auto& r : sc.requests)
      if (r.household_id == sc.households[h].id) lane.requests.push_back(&r);
    if (sc.households[h].has_ev || !lane.requests.empty()) lanes.push_back(std::move(lane));
  }
  return lanes;
}

SimResult run_with(const Scenario& sc, const std::vector<const Controller*>& per_lane,
                   std::vector<Lane> lanes, const SimOptions& opt) {
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    lanes[i].wants_features = per_lane[i]->needs_features();
    lanes[i].layout = per_lane[i]->layout;
  }
  auto policy = [&](std::size_t lane, const RequestState& st, int k,
                    std::span<const double> f) -> Decision {
    const double raw = decide(*per_lane[lane], f, st);
    const ChargingRequest& r = *st.request;
    return {raw, clamp_output(raw, r.cap_kwh, st.remaining_kwh, r.end_step - k)};
  };
  return step_through(sc, std::move(lanes), policy, true, opt, nullptr);
}

SimResult forced_impl(const Scenario& sc, const Schedule& schedule, const FeatureLayout* layout,
                      const DecisionObserver* observer, const SimOptions& opt) {
  for (const auto& r : sc.requests) {
    auto it = schedule.rows.find(r.id);
    if (it == schedule.rows.end())
      throw StructuralError(fmt::format("schedule lacks request {}", r.id));
    if (static_cast<int>(it->second.size()) != r.length())
      throw StructuralError(fmt::format("schedule row {} has wrong length", r.id));
    for (double e : it->second)
      if (!(e >= -kBoundTol && e <= r.cap_kwh + kBoundTol))
        throw InfeasibleError(fmt::format("schedule row {} violates the cap", r.id));
  }
  if (schedule.rows.size() != sc.requests.size())
    throw StructuralError("schedule references unknown requests");
  auto lanes = make_lanes(sc);
  for (auto& lane : lanes) {
    lane.wants_features = layout != nullptr;
    if (layout) lane.layout = *layout;
  }
  auto policy = [&](std::size_t, const RequestState& st, int k,
                    std::span<const double>) -> Decision {
    const ChargingRequest& r = *st.request;
    const double e = schedule.rows.at(r.id)[static_cast<std::size_t>(k - r.start_step)];
    return {e / r.cap_kwh, e};
  };
  return step_through(sc, std::move(lanes), policy, false, opt, observer);
}

}  // namespace

SimResult run(const Scenario& scenario, const Controller& controller, const SimOptions& options) {
  auto lanes = make_lanes(scenario);
  std::vector<const Controller*> per_lane(lanes.size(), &controller);
  return run_with(scenario, per_lane, std::move(lanes), options);
}

SimResult run(const Scenario& scenario, const std::map<int, Controller>& controllers,
              const SimOptions& options) {
  auto lanes = make_lanes(scenario);
  std::vector<const Controller*> per_lane;
  for (const auto& lane : lanes) {
    const int id = scenario.households[lane.household].id;
    auto it = controllers.find(id);
    if (it == controllers.end())
      throw StructuralError(fmt::format("no controller for household {}", id));
    per_lane.push_back(&it->second);
  }
  return run_with(scenario, per_lane, std::move(lanes), options);
}

SimResult run_forced(const Scenario& scenario, const Schedule& schedule, const SimOptions& options) {
  return forced_impl(scenario, schedule, nullptr, nullptr, options);
}

SimResult run_forced(const Scenario& scenario, const Schedule& schedule, const FeatureLayout& layout,
                     const DecisionObserver& observer, const SimOptions& options) {
  return forced_impl(scenario, schedule, &layout, &observer, options);
}

}  // namespace evcharge
