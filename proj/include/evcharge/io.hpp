#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "evcharge/core.hpp"

namespace evcharge {

inline constexpr int kScenarioFormatVersion = 1;

/// "2013-01-07T00:30:00Z" <-> epoch seconds. Parsing also accepts a space
/// separator and a missing or "+00:00" zone suffix.
std::string format_iso8601(std::int64_t epoch);
std::optional<std::int64_t> parse_iso8601(std::string_view text);

nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

/// `request_id,step,kwh` with absolute grid steps.
void save_schedule_csv(const Scenario& scenario, const Schedule& schedule,
                       const std::filesystem::path& path);
Schedule load_schedule_csv(const Scenario& scenario, const std::filesystem::path& path);

/// `step,timestamp,total_kw`.
void save_load_csv(const TimeGrid& grid, const std::vector<double>& total_kw,
                   const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace evcharge
