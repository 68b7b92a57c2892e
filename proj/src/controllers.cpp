#include "evcharge/controllers.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "evcharge/error.hpp"

namespace evcharge {

Controller Controller::neural(NetParams params, FeatureLayout layout) {
  params.validate();
  if (params.input_dim != layout.input_dim())
    throw StructuralError(fmt::format("network takes {} inputs but the layout provides {}",
                                      params.input_dim, layout.input_dim()));
  return {PolicyKind::Neural, layout, std::move(params)};
}

std::string Controller::name() const {
  switch (kind) {
    case PolicyKind::Max: return "MAX";
    case PolicyKind::Min: return "MIN";
    case PolicyKind::Const: return "CONST";
    case PolicyKind::Neural:
      return fmt::format("NN-{}{}", layout.type == ControllerType::A ? 'A' : 'H',
                         layout.end_time ? "" : "-NT");
  }
  return "?";
}

RequestState RequestState::start(const ChargingRequest& r) {
  RequestState s;
  s.request = &r;
  s.remaining_kwh = r.energy_kwh;
  s.even_rate = r.energy_kwh / r.length() / r.cap_kwh;
  return s;
}

double clamp_output(double raw, double cap_kwh, double remaining_kwh, int steps_remaining) {
  remaining_kwh = std::max(0.0, remaining_kwh);
  const double floor = std::max(0.0, remaining_kwh - cap_kwh * (steps_remaining - 1));
  const double ceiling = std::min(cap_kwh, remaining_kwh);
  return std::clamp(raw * cap_kwh, std::min(floor, ceiling), ceiling);
}

double decide(const Controller& controller, std::span<const double> features,
              const RequestState& state) {
  switch (controller.kind) {
    case PolicyKind::Max: return 1.0;
    case PolicyKind::Min: return 0.0;
    case PolicyKind::Const: return state.even_rate;
    case PolicyKind::Neural:
      if (static_cast<int>(features.size()) != controller.params->input_dim)
        throw StructuralError(fmt::format("neural controller expects {} features, got {}",
                                          controller.params->input_dim, features.size()));
      return forward(*controller.params, features);
  }
  return 0.0;
}

Controller parse_controller_spec(const std::string& spec) {
  if (spec == "max") return Controller::max();
  if (spec == "min") return Controller::min();
  if (spec == "const") return Controller::constant();
  if (spec.rfind("nn:", 0) == 0) {
    const auto colon = spec.rfind(':');
    if (colon <= 3) throw ConfigError("controller spec must be nn:<model-file>:<h|a>");
    const std::string file = spec.substr(3, colon - 3);
    const std::string type = spec.substr(colon + 1);
    if (type != "h" && type != "a") throw ConfigError("controller type must be 'h' or 'a'");
    NetParams params = load_model(file);
    const auto t = type == "a" ? ControllerType::A : ControllerType::H;
    const FeatureLayout layout = layout_for(t, params.input_dim);
    return Controller::neural(std::move(params), layout);
  }
  throw ConfigError("unknown controller spec '" + spec + "'");
}

}  // namespace evcharge
