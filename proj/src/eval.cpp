#include "evcharge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "json.hpp"

#include "evcharge/error.hpp"
#include "evcharge/io.hpp"
#include "evcharge/sim.hpp"

namespace evcharge {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw ContractError("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricsReport metrics_over(std::span<const double> total_kw, int begin, int end) {
  if (begin < 0 || end > static_cast<int>(total_kw.size()) || end - begin < 1)
    throw ContractError(fmt::format("window [{}, {}) outside a series of {} steps", begin, end,
                                    total_kw.size()));
  const auto window = total_kw.subspan(static_cast<std::size_t>(begin),
                                       static_cast<std::size_t>(end - begin));
  const double n = static_cast<double>(window.size());
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / n;
  double acc = 0.0;
  for (double v : window) acc += (v - mean) * (v - mean);
  std::vector<double> values(window.begin(), window.end());
  MetricsReport m;
  m.objective = std::sqrt(acc / n);
  m.min_kw = *std::min_element(values.begin(), values.end());
  m.max_kw = *std::max_element(values.begin(), values.end());
  m.p2_5_kw = percentile(values, 2.5);
  m.p97_5_kw = percentile(std::move(values), 97.5);
  m.window_begin = begin;
  m.window_end = end;
  return m;
}

MetricsReport metrics(std::span<const double> total_kw, const TimeGrid& grid) {
  if (static_cast<int>(total_kw.size()) != grid.n_steps)
    throw ContractError(fmt::format("series has {} steps, grid has {}", total_kw.size(), grid.n_steps));
  if (grid.n_steps < 2 * grid.steps_per_day())
    throw ContractError(fmt::format("series of {} steps is shorter than two days", grid.n_steps));
  return metrics_over(total_kw, grid.warmup_steps(), grid.n_steps);
}

int feasibility_violations(const Scenario& scenario, const Schedule& schedule) {
  int bad = 0;
  std::set<int> seen;
  for (const auto& [id, row] : schedule.rows) {
    const auto it = std::find_if(scenario.requests.begin(), scenario.requests.end(),
                                 [&](const ChargingRequest& r) { return r.id == id; });
    if (it == scenario.requests.end() || static_cast<int>(row.size()) != it->length()) {
      ++bad;
      continue;
    }
    seen.insert(id);
    double sum = 0.0;
    bool in_bounds = true;
    for (double e : row) {
      sum += e;
      if (e < -kBoundTol || e > it->cap_kwh + kBoundTol) in_bounds = false;
    }
    if (!in_bounds || std::abs(sum - it->energy_kwh) > 1e-9 * std::max(1.0, it->energy_kwh)) ++bad;
  }
  for (const auto& r : scenario.requests)
    if (!seen.count(r.id)) ++bad;
  return bad;
}

std::vector<std::uint64_t> repetition_seeds(std::uint64_t base_seed, int reps) {
  if (reps < 1) throw ConfigError("at least one repetition is required");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < reps; ++i) seeds.push_back(base_seed * 1000 + static_cast<std::uint64_t>(i));
  return seeds;
}

namespace {

struct RunOutcome {
  std::vector<double> total_kw;
  MetricsReport report;
};

RunOutcome run_entry(const Scenario& scenario, const CompareEntry& e, std::uint64_t seed) {
  RunOutcome out;
  Schedule realized;
  if (e.schedule) {
    realized = *e.schedule;
    out.total_kw = total_load(scenario, realized);
  } else {
    SimOptions opt;
    opt.record_households = false;
    opt.record_raw = false;
    const Controller ctl = e.stochastic() ? e.trainer(seed) : *e.controller;
    SimResult sim = run(scenario, ctl, opt);
    realized = std::move(sim.schedule);
    out.total_kw = std::move(sim.total_kw);
  }
  if (const int bad = feasibility_violations(scenario, realized); bad > 0)
    throw InfeasibleError(fmt::format("{}: {} request(s) violate energy or cap", e.label, bad));
  out.report = metrics(out.total_kw, scenario.grid);
  return out;
}

}  // namespace

std::vector<CompareRow> compare(const Scenario& scenario, const std::vector<CompareEntry>& entries,
                                const std::vector<std::uint64_t>& seeds) {
  std::set<std::string> labels;
  for (const auto& e : entries) {
    if (!labels.insert(e.label).second) throw ConfigError(fmt::format("duplicate label '{}'", e.label));
    const int kinds = (e.schedule ? 1 : 0) + (e.controller ? 1 : 0) + (e.stochastic() ? 1 : 0);
    if (kinds != 1)
      throw ConfigError(fmt::format("entry '{}' needs exactly one of schedule, controller, trainer", e.label));
    if (e.stochastic() && seeds.empty())
      throw ConfigError(fmt::format("entry '{}' is trained but no seeds were given", e.label));
  }

  std::vector<std::pair<std::size_t, std::size_t>> tasks;  // (entry, seed index)
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::size_t runs = entries[i].stochastic() ? seeds.size() : 1;
    for (std::size_t k = 0; k < runs; ++k) tasks.emplace_back(i, k);
  }
  std::vector<RunOutcome> outcomes(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto [i, k] = tasks[static_cast<std::size_t>(t)];
    try {
      outcomes[static_cast<std::size_t>(t)] =
          run_entry(scenario, entries[i], seeds.empty() ? 0 : seeds[k]);
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<CompareRow> rows(entries.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto [i, k] = tasks[t];
    CompareRow& row = rows[i];
    const MetricsReport& m = outcomes[t].report;
    if (k == 0) row.total_kw = outcomes[t].total_kw;
    row.objectives.push_back(m.objective);
    row.min_kw += m.min_kw;
    row.p2_5_kw += m.p2_5_kw;
    row.p97_5_kw += m.p97_5_kw;
    row.max_kw += m.max_kw;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CompareRow& row = rows[i];
    row.label = entries[i].label;
    row.group = entries[i].group;
    row.runs = static_cast<int>(row.objectives.size());
    const double r = row.runs;
    row.min_kw /= r;
    row.p2_5_kw /= r;
    row.p97_5_kw /= r;
    row.max_kw /= r;
    row.objective_mean = std::accumulate(row.objectives.begin(), row.objectives.end(), 0.0) / r;
    if (row.runs > 1) {
      double acc = 0.0;
      for (double v : row.objectives) acc += (v - row.objective_mean) * (v - row.objective_mean);
      row.objective_std = std::sqrt(acc / (r - 1.0));
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
    return static_cast<int>(a.group) < static_cast<int>(b.group);
  });
  return rows;
}

std::string report_json(const std::vector<CompareRow>& rows) {
  // Written by hand so every number uses the shortest round-trip form.
  std::string out = "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += fmt::format(
        "  {{\"label\": {}, \"objective_mean\": {}, \"objective_std\": {}, \"min\": {}, "
        "\"p2_5\": {}, \"p97_5\": {}, \"max\": {}}}{}\n",
        nlohmann::json(r.label).dump(), format_double(r.objective_mean), format_double(r.objective_std),
        format_double(r.min_kw), format_double(r.p2_5_kw), format_double(r.p97_5_kw),
        format_double(r.max_kw), i + 1 < rows.size() ? "," : "");
  }
  out += "]\n";
  return out;
}

std::string plot_csv(const std::vector<CompareRow>& rows, const TimeGrid& grid) {
  std::string out = "step,timestamp,label,total_kw\n";
  for (const auto& r : rows) {
    std::string label = r.label;
    if (label.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = quoted + "\"";
    }
    for (std::size_t t = 0; t < r.total_kw.size(); ++t)
      out += fmt::format("{},{},{},{}\n", t, format_iso8601(grid.epoch_at(static_cast<int>(t))), label,
                         format_double(r.total_kw[t]));
  }
  return out;
}

Controller imitation_controller(const Scenario& scenario, const Schedule& target,
                                const FeatureLayout& layout, int hidden_dim,
                                const TrainConfig& config) {
  const ImitationDataset ds = build_dataset(scenario, target, layout);
  TrainResult res = train(ds, hidden_dim, config);
  return Controller::neural(std::move(res.params), layout);
}

Controller cma_controller(const Scenario& scenario, const FeatureLayout& layout, int hidden_dim,
                          const CmaConfig& config) {
  DirectResult res = cma_optimize(scenario, NetSpec{layout, hidden_dim}, config);
  return Controller::neural(std::move(res.params), layout);
}

Controller gd_controller(const Scenario& scenario, const FeatureLayout& layout, int hidden_dim,
                         const GdConfig& config) {
  DirectResult res = gd_optimize(scenario, NetSpec{layout, hidden_dim}, config);
  return Controller::neural(std::move(res.params), layout);
}

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

FeatureLayout layout_from(const json& j) {
  const std::string type = get_or<std::string>(j, "type", "a");
  if (type != "a" && type != "h") throw ConfigError(fmt::format("unknown controller type '{}'", type));
  return FeatureLayout{type == "a" ? ControllerType::A : ControllerType::H, get_or(j, "end_time", true)};
}

EntryGroup group_from(const json& j, EntryGroup fallback) {
  if (!j.contains("group")) return fallback;
  const std::string g = j.at("group").get<std::string>();
  if (g == "qp") return EntryGroup::Qp;
  if (g == "heuristic") return EntryGroup::Heuristic;
  if (g == "direct") return EntryGroup::Direct;
  if (g == "imitation") return EntryGroup::Imitation;
  throw ConfigError(fmt::format("unknown group '{}'", g));
}

}  // namespace

CompareSpec load_compare_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open comparison spec {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  try {
    auto shared = std::make_shared<Scenario>(load_scenario(resolve(doc.at("scenario").get<std::string>())));
    auto train_scn = doc.contains("train_scenario")
                         ? std::make_shared<Scenario>(load_scenario(resolve(doc.at("train_scenario").get<std::string>())))
                         : shared;
    CompareSpec spec;
    spec.scenario = *shared;

    // Relaxed schedules are deterministic; keep one per (scenario, lambda, per_household).
    std::map<std::tuple<const Scenario*, double, bool>, std::shared_ptr<Schedule>> relaxed;
    std::function<std::shared_ptr<Schedule>(const std::shared_ptr<Scenario>&, double, bool)> relax_for =
        [&](const std::shared_ptr<Scenario>& scn, double lambda, bool per_household) {
      const auto key = std::make_tuple(scn.get(), lambda, per_household);
      auto it = relaxed.find(key);
      if (it != relaxed.end()) return it->second;
      RelaxConfig cfg;
      cfg.lambda = lambda;
      cfg.per_household = per_household;
      const Schedule* warm = nullptr;
      if (lambda > 0.0 && !per_household) warm = relax_for(scn, 0.0, false).get();
      auto s = std::make_shared<Schedule>(solve(*scn, cfg, warm).schedule);
      relaxed.emplace(key, s);
      return s;
    };

    for (const auto& e : doc.at("entries")) {
      CompareEntry entry;
      entry.label = e.at("label").get<std::string>();
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "relax") {
        entry.group = group_from(e, EntryGroup::Qp);
        entry.schedule = *relax_for(shared, get_or(e, "lambda", 0.0), get_or(e, "per_household", false));
      } else if (kind == "schedule") {
        entry.group = group_from(e, EntryGroup::Qp);
        entry.schedule = load_schedule_csv(*shared, resolve(e.at("path").get<std::string>()));
      } else if (kind == "controller") {
        entry.group = group_from(e, EntryGroup::Heuristic);
        std::string c = e.at("controller").get<std::string>();
        if (c.rfind("nn:", 0) == 0) {
          const auto colon = c.rfind(':');
          c = "nn:" + resolve(c.substr(3, colon - 3)).string() + c.substr(colon);
        }
        entry.controller = parse_controller_spec(c);
      } else if (kind == "cma") {
        entry.group = group_from(e, EntryGroup::Direct);
        CmaConfig cfg;
        cfg.population = get_or(e, "population", cfg.population);
        cfg.generations = get_or(e, "generations", cfg.generations);
        cfg.sigma = get_or(e, "sigma", cfg.sigma);
        cfg.validate();
        const FeatureLayout layout = layout_from(e);
        const int hidden = get_or(e, "hidden", 5);
        entry.trainer = [train_scn, layout, hidden, cfg](std::uint64_t seed) {
          CmaConfig c = cfg;
          c.seed = seed;
          return cma_controller(*train_scn, layout, hidden, c);
        };
      } else if (kind == "gd") {
        entry.group = group_from(e, EntryGroup::Direct);
        GdConfig cfg;
        cfg.max_iters = get_or(e, "max_iters", cfg.max_iters);
        cfg.fd_epsilon = get_or(e, "fd_epsilon", cfg.fd_epsilon);
        if (e.contains("step_sizes")) cfg.step_sizes = e.at("step_sizes").get<std::vector<double>>();
        cfg.validate();
        const FeatureLayout layout = layout_from(e);
        const int hidden = get_or(e, "hidden", 5);
        entry.trainer = [train_scn, layout, hidden, cfg](std::uint64_t seed) {
          GdConfig c = cfg;
          c.seed = seed;
          return gd_controller(*train_scn, layout, hidden, c);
        };
      } else if (kind == "imitate") {
        entry.group = group_from(e, EntryGroup::Imitation);
        TrainConfig cfg;
        cfg.batch_size = get_or(e, "batch_size", cfg.batch_size);
        cfg.max_epochs = get_or(e, "max_epochs", cfg.max_epochs);
        cfg.patience = get_or(e, "patience", cfg.patience);
        cfg.train_fraction = get_or(e, "train_fraction", cfg.train_fraction);
        cfg.learning_rate = get_or(e, "learning_rate", cfg.learning_rate);
        cfg.validate();
        const FeatureLayout layout = layout_from(e);
        const int hidden = get_or(e, "hidden", 50);
        auto target = relax_for(train_scn, get_or(e, "lambda", 0.0), false);
        entry.trainer = [train_scn, target, layout, hidden, cfg](std::uint64_t seed) {
          TrainConfig c = cfg;
          c.seed = seed;
          return imitation_controller(*train_scn, *target, layout, hidden, c);
        };
      } else {
        throw ConfigError(fmt::format("entry '{}' has unknown kind '{}'", entry.label, kind));
      }
      spec.entries.push_back(std::move(entry));
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("comparison spec {}: {}", path.string(), e.what()));
  }
}

}  // namespace evcharge
