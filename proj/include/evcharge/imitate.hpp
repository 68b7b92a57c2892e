#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evcharge/core.hpp"
#include "evcharge/features.hpp"
#include "evcharge/net.hpp"

namespace evcharge {

/// Supervised rows (features at decision time, scheduled speed / cap).
struct ImitationDataset {
  FeatureLayout layout;
  std::string source;  // free-form provenance, e.g. the schedule file
  std::vector<int> household_ids;
  std::vector<int> steps;
  std::vector<double> features;  // row-major, layout.input_dim() columns
  std::vector<double> targets;

  std::size_t rows() const { return targets.size(); }
  int width() const { return layout.input_dim(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * static_cast<std::size_t>(width()),
                                                     static_cast<std::size_t>(width()));
  }
  void append(int household_id, int step, std::span<const double> f, double target);
};

/// Replays `schedule` through the simulator and records one row per
/// (household, step) that has an active request.
ImitationDataset build_dataset(const Scenario& scenario, const Schedule& schedule,
                               const FeatureLayout& layout);

/// Chronological per-household prefix split: the first ceil(fraction * n)
/// rows of each household train, the rest validate.
std::pair<ImitationDataset, ImitationDataset> split(const ImitationDataset& dataset,
                                                    double train_fraction);

struct TrainConfig {
  int batch_size = 128;
  int max_epochs = 1000;
  int patience = 100;
  double train_fraction = 0.85;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double validation_mse = 0.0;
};

struct TrainResult {
  NetParams params;  // snapshot with the lowest validation MSE
  int best_epoch = 0;
  double best_validation_mse = 0.0;
  std::vector<EpochLog> log;
};

TrainResult train(const ImitationDataset& train_set, const ImitationDataset& validation_set,
                  int hidden_dim, const TrainConfig& config);

/// Splits with config.train_fraction and trains.
TrainResult train(const ImitationDataset& dataset, int hidden_dim, const TrainConfig& config);

/// `household_id,step,f1..fK,target`.
void save_dataset_csv(const ImitationDataset& dataset, const std::filesystem::path& path);
/// The layout is recovered from the column count (20/18 A, 15/13 H).
ImitationDataset load_dataset_csv(const std::filesystem::path& path);

void save_train_log_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace evcharge
