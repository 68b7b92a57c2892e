#include "evcharge/imitate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "csv.hpp"
#include "evcharge/error.hpp"
#include "evcharge/io.hpp"
#include "evcharge/sim.hpp"

namespace evcharge {

void ImitationDataset::append(int household_id, int step, std::span<const double> f,
                              double target) {
  if (static_cast<int>(f.size()) != width())
    throw StructuralError(fmt::format("row of width {} in a dataset of width {}", f.size(), width()));
  household_ids.push_back(household_id);
  steps.push_back(step);
  features.insert(features.end(), f.begin(), f.end());
  targets.push_back(target);
}

ImitationDataset build_dataset(const Scenario& scenario, const Schedule& schedule,
                               const FeatureLayout& layout) {
  ImitationDataset ds;
  ds.layout = layout;
  std::map<int, double> cap;
  for (const auto& r : scenario.requests) cap[r.id] = r.cap_kwh;
  DecisionObserver collect = [&](const DecisionRecord& d) {
    ds.append(d.household_id, d.step, d.features,
              std::clamp(d.energy_kwh / cap.at(d.request_id), 0.0, 1.0));
  };
  SimOptions opt;
  opt.record_households = false;
  opt.record_raw = false;
  run_forced(scenario, schedule, layout, collect, opt);
  return ds;
}

std::pair<ImitationDataset, ImitationDataset> split(const ImitationDataset& dataset,
                                                    double train_fraction) {
  if (dataset.rows() == 0) throw ContractError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  std::map<int, std::size_t> per_household;
  for (int h : dataset.household_ids) ++per_household[h];
  std::map<int, std::size_t> quota;
  for (const auto& [h, n] : per_household) {
    const auto q = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
    quota[h] = n < 2 ? n : q;
  }
  ImitationDataset train, validation;
  train.layout = validation.layout = dataset.layout;
  train.source = validation.source = dataset.source;
  std::map<int, std::size_t> used;
  for (std::size_t i = 0; i < dataset.rows(); ++i) {
    const int h = dataset.household_ids[i];
    auto& target = used[h]++ < quota[h] ? train : validation;
    target.append(h, dataset.steps[i], dataset.row(i), dataset.targets[i]);
  }
  return {std::move(train), std::move(validation)};
}

void TrainConfig::validate() const {
  if (batch_size <= 0 || max_epochs <= 0 || patience < 0)
    throw ConfigError("batch_size and max_epochs must be positive, patience non-negative");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

TrainResult train(const ImitationDataset& train_set, const ImitationDataset& validation_set,
                  int hidden_dim, const TrainConfig& config) {
  config.validate();
  if (train_set.rows() == 0 || validation_set.rows() == 0)
    throw ContractError("training and validation sets must both be non-empty");
  if (!(train_set.layout == validation_set.layout))
    throw StructuralError("training and validation layouts differ");

  const int width = train_set.width();
  NetParams params = init_params(width, hidden_dim, config.seed);
  AdamState adam = AdamState::for_size(params.theta.size(), config.learning_rate);

  TrainResult result;
  result.params = params;
  result.best_validation_mse = std::numeric_limits<double>::infinity();

  const std::size_t n = train_set.rows();
  std::vector<std::size_t> order(n);
  std::vector<double> batch_x, batch_y;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = train_set.row(order[i]);
        batch_x.insert(batch_x.end(), r.begin(), r.end());
        batch_y.push_back(train_set.targets[order[i]]);
      }
      const auto g = grad_mse(params, batch_x, batch_y);
      adam_step(params.theta, adam, g);
    }

    EpochLog entry{epoch, mse(params, train_set.features, train_set.targets),
                   mse(params, validation_set.features, validation_set.targets)};
    if (!std::isfinite(entry.train_mse) || !std::isfinite(entry.validation_mse))
      throw NumericError(fmt::format("loss became non-finite at epoch {} (train {}, validation {})",
                                     epoch, entry.train_mse, entry.validation_mse));
    result.log.push_back(entry);
    if (entry.validation_mse < result.best_validation_mse) {
      result.best_validation_mse = entry.validation_mse;
      result.best_epoch = epoch;
      result.params = params;
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }
  return result;
}

TrainResult train(const ImitationDataset& dataset, int hidden_dim, const TrainConfig& config) {
  auto [tr, va] = split(dataset, config.train_fraction);
  return train(tr, va, hidden_dim, config);
}

void save_dataset_csv(const ImitationDataset& dataset, const std::filesystem::path& path) {
  std::string out = "household_id,step";
  for (int k = 1; k <= dataset.width(); ++k) out += fmt::format(",f{}", k);
  out += ",target\n";
  for (std::size_t i = 0; i < dataset.rows(); ++i) {
    out += fmt::format("{},{}", dataset.household_ids[i], dataset.steps[i]);
    for (double v : dataset.row(i)) out += fmt::format(",{}", v);
    out += fmt::format(",{}\n", dataset.targets[i]);
  }
  write_text_file(path, out);
}

ImitationDataset load_dataset_csv(const std::filesystem::path& path) {
  csv::Reader reader(path);
  const auto names = reader.header({"household_id", "step"}, true);
  const int width = static_cast<int>(names.size()) - 3;
  if (width < 1 || names.back() != "target") reader.fail("expected columns f1..fK,target");
  for (int k = 1; k <= width; ++k)
    if (names[static_cast<std::size_t>(k + 1)] != fmt::format("f{}", k))
      reader.fail(fmt::format("expected column f{}", k));
  ImitationDataset ds;
  if (width == 20 || width == 18)
    ds.layout = layout_for(ControllerType::A, width);
  else if (width == 15 || width == 13)
    ds.layout = layout_for(ControllerType::H, width);
  else
    reader.fail(fmt::format("{} feature columns match no controller layout", width));
  ds.source = path.string();
  std::vector<std::string_view> f;
  std::vector<double> row(static_cast<std::size_t>(width));
  while (reader.next_row(f)) {
    if (f.size() != names.size()) reader.fail("wrong number of columns");
    const int h = static_cast<int>(reader.to_int(f[0], "household_id"));
    const int step = static_cast<int>(reader.to_int(f[1], "step"));
    for (int k = 0; k < width; ++k)
      row[static_cast<std::size_t>(k)] = reader.to_double(f[static_cast<std::size_t>(k + 2)], "f");
    const double target = reader.to_double(f.back(), "target");
    if (!(target >= 0.0 && target <= 1.0)) reader.fail("target outside [0, 1]");
    ds.append(h, step, row, target);
  }
  return ds;
}

void save_train_log_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::string out = "epoch,train_mse,validation_mse\n";
  for (const auto& e : result.log)
    out += fmt::format("{},{},{}\n", e.epoch, e.train_mse, e.validation_mse);
  write_text_file(path, out);
}

}  // namespace evcharge
