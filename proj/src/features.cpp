#include "evcharge/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "evcharge/error.hpp"

namespace evcharge {

namespace {
constexpr double kGuard = 1e-9;

double relative_change(double now, double before) {
  return before <= kGuard ? 0.0 : now / before - 1.0;
}
}  // namespace

FeatureLayout layout_for(ControllerType type, int input_dim) {
  const FeatureLayout full{type, true}, no_end{type, false};
  if (input_dim == full.input_dim()) return full;
  if (input_dim == no_end.input_dim()) return no_end;
  throw StructuralError(fmt::format("input width {} does not fit a {}-type controller", input_dim,
                                    type == ControllerType::A ? 'A' : 'H'));
}

ConsumptionHistory::ConsumptionHistory(int steps_per_day, int step_seconds)
    : buffer_(static_cast<std::size_t>(std::max(1, steps_per_day)), 0.0),
      lag_1h_(std::max(1, 3600 / step_seconds)),
      lag_3h_(std::max(1, 3 * 3600 / step_seconds)) {
  const int max_lag = window() - 1;
  lag_1h_ = std::min(lag_1h_, std::max(1, max_lag));
  lag_3h_ = std::min(lag_3h_, std::max(1, max_lag));
}

void ConsumptionHistory::reset(double value) {
  std::fill(buffer_.begin(), buffer_.end(), value);
  head_ = 0;
}

void ConsumptionHistory::push(double value) {
  head_ = (head_ + 1) % buffer_.size();
  buffer_[head_] = value;
}

double ConsumptionHistory::lagged(int lag) const {
  const std::size_t n = buffer_.size();
  return buffer_[(head_ + n - static_cast<std::size_t>(lag) % n) % n];
}

std::array<double, kConsumptionFeatures> consumption_features(const ConsumptionHistory& history) {
  const double now = history.latest();
  const auto window = history.raw();
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= static_cast<double>(window.size());

  std::array<double, kConsumptionFeatures> f{};
  f[0] = relative_change(now, history.lagged(1));
  f[1] = relative_change(now, history.lagged(history.lag_1h()));
  f[2] = relative_change(now, history.lagged(history.lag_3h()));
  f[3] = *hi == *lo ? 0.5 : (now - *lo) / (*hi - *lo);
  f[4] = mean <= kGuard ? 1.0 : now / mean;
  return f;
}

std::array<double, kRequestFeatures> request_features(const ChargingRequest& request,
                                                      double remaining_kwh, int step,
                                                      const TimeGrid& grid) {
  if (!request.active_at(step))
    throw ContractError(fmt::format("request {} is not active at step {}", request.id, step));
  const int n_rem = request.end_step - step;
  const double cap = request.cap_kwh;
  const double min_energy = std::max(0.0, remaining_kwh - cap * (n_rem - 1));
  const double even_energy = remaining_kwh / n_rem;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double now = two_pi * grid.seconds_of_day(step) / kSecondsPerDay;
  const double end = two_pi * grid.seconds_of_day(request.end_step) / kSecondsPerDay;

  std::array<double, kRequestFeatures> f{};
  f[0] = request.energy_kwh <= 0.0 ? 1.0 : remaining_kwh / request.energy_kwh;
  f[1] = static_cast<double>(n_rem) / request.length();
  f[2] = std::clamp(min_energy / cap, 0.0, 1.0);
  f[3] = std::clamp(even_energy / cap, 0.0, 1.0);
  f[4] = static_cast<double>(request.length()) * grid.step_seconds / kSecondsPerDay;
  f[5] = std::sin(now);
  f[6] = std::cos(now);
  f[7] = std::sin(end);
  f[8] = std::cos(end);
  f[9] = grid.is_weekend(step) ? 1.0 : 0.0;
  return f;
}

void assemble_features(const FeatureLayout& layout,
                       const std::array<double, kConsumptionFeatures>& household,
                       const std::array<double, kConsumptionFeatures>& grid,
                       const std::array<double, kRequestFeatures>& request,
                       std::vector<double>& out) {
  out.clear();
  out.insert(out.end(), household.begin(), household.end());
  if (layout.type == ControllerType::A) out.insert(out.end(), grid.begin(), grid.end());
  for (std::size_t i = 0; i < request.size(); ++i) {
    if (!layout.end_time && (i == 7 || i == 8)) continue;
    out.push_back(request[i]);
  }
}

}  // namespace evcharge
