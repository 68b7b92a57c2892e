#pragma once

#include <array>
#include <span>
#include <vector>

#include "evcharge/core.hpp"

namespace evcharge {

/// H controllers see their household and the request; A controllers also see
/// the neighborhood meter.
enum class ControllerType { H, A };

/// Which feature blocks a controller consumes. Without end-time features the
/// sin_end/cos_end pair is removed, so the input is two values shorter.
struct FeatureLayout {
  ControllerType type = ControllerType::A;
  bool end_time = true;

  int input_dim() const { return (type == ControllerType::A ? 20 : 15) - (end_time ? 0 : 2); }
  bool operator==(const FeatureLayout&) const = default;
};

/// Infers the layout from a network input width (20/18 for A, 15/13 for H).
FeatureLayout layout_for(ControllerType type, int input_dim);

inline constexpr std::size_t kConsumptionFeatures = 5;
inline constexpr std::size_t kRequestFeatures = 10;

/// Rolling record of the last 24 hours of one consumption signal (kW).
class ConsumptionHistory {
 public:
  ConsumptionHistory(int steps_per_day, int step_seconds);

  /// Fills the whole window with `value`; pushes then shift it out.
  void reset(double value);
  void push(double value);

  /// Value `lag` steps before the latest one.
  double lagged(int lag) const;
  double latest() const { return lagged(0); }
  int window() const { return static_cast<int>(buffer_.size()); }
  int lag_1h() const { return lag_1h_; }
  int lag_3h() const { return lag_3h_; }
  std::span<const double> raw() const { return buffer_; }

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;  // index of the latest value
  int lag_1h_;
  int lag_3h_;
};

/// delta_step, delta_1h, delta_3h, minmax_24h, ratio_mean_24h.
std::array<double, kConsumptionFeatures> consumption_features(const ConsumptionHistory& history);

/// rem_charge_frac, rem_time_frac, min_speed_norm, even_speed_norm,
/// length_days, sin_now, cos_now, sin_end, cos_end, weekend_flag; evaluated at
/// the start of `step`, the step whose charging is being decided.
std::array<double, kRequestFeatures> request_features(const ChargingRequest& request,
                                                      double remaining_kwh, int step,
                                                      const TimeGrid& grid);

/// Concatenates the blocks in canonical order: household, grid (A only),
/// request (minus the end-time pair when the layout drops it).
void assemble_features(const FeatureLayout& layout,
                       const std::array<double, kConsumptionFeatures>& household,
                       const std::array<double, kConsumptionFeatures>& grid,
                       const std::array<double, kRequestFeatures>& request,
                       std::vector<double>& out);

}  // namespace evcharge
