#pragma once

#include <optional>
#include <span>
#include <string>

#include "evcharge/core.hpp"
#include "evcharge/features.hpp"
#include "evcharge/net.hpp"

namespace evcharge {

enum class PolicyKind { Max, Min, Const, Neural };

/// A charging policy. Heuristics ignore features; the neural policy needs a
/// parameter vector whose input width matches its feature layout.
struct Controller {
  PolicyKind kind = PolicyKind::Max;
  FeatureLayout layout;
  std::optional<NetParams> params;

  static Controller max() { return {PolicyKind::Max, {}, std::nullopt}; }
  static Controller min() { return {PolicyKind::Min, {}, std::nullopt}; }
  static Controller constant() { return {PolicyKind::Const, {}, std::nullopt}; }
  static Controller neural(NetParams params, FeatureLayout layout);

  bool needs_features() const { return kind == PolicyKind::Neural; }
  std::string name() const;
};

/// Bookkeeping the simulator keeps per active request.
struct RequestState {
  const ChargingRequest* request = nullptr;
  double remaining_kwh = 0.0;
  double even_rate = 0.0;  // (R/L)/cap, fixed when the request starts

  static RequestState start(const ChargingRequest& r);
};

/// Turns a raw output in [0,1] into the energy for the next step: at least
/// what is needed to still finish, at most the cap and the remaining energy.
double clamp_output(double raw, double cap_kwh, double remaining_kwh, int steps_remaining);

/// Raw output in [0,1]. `features` is only read by the neural policy.
double decide(const Controller& controller, std::span<const double> features,
              const RequestState& state);

/// `max`, `min`, `const`, or `nn:<model-file>:<h|a>`.
Controller parse_controller_spec(const std::string& spec);

}  // namespace evcharge
