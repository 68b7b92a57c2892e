#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "evcharge/controllers.hpp"
#include "evcharge/directopt.hpp"
#include "evcharge/error.hpp"
#include "evcharge/eval.hpp"
#include "evcharge/imitate.hpp"
#include "evcharge/io.hpp"
#include "evcharge/relax.hpp"
#include "evcharge/scenario.hpp"
#include "evcharge/sim.hpp"

namespace fs = std::filesystem;
using namespace evcharge;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Globals {
  std::uint64_t seed = 1;
  std::string out = ".";
};

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

void say(const fs::path& written) { std::cout << "wrote " << written.string() << "\n"; }

FeatureLayout parse_layout(const std::string& type, bool no_endtime) {
  if (type != "a" && type != "h") throw ConfigError(fmt::format("unknown controller type '{}'", type));
  return {type == "a" ? ControllerType::A : ControllerType::H, !no_endtime};
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

// synth ---------------------------------------------------------------------

struct SynthArgs {
  SynthConfig cfg;
  std::string plain_mode = "individual";
  std::string start;
};

void run_synth(const Globals& g, SynthArgs a) {
  a.cfg.rng_seed = g.seed;
  if (a.plain_mode == "aggregate")
    a.cfg.plain_mode = PlainMode::Aggregate;
  else if (a.plain_mode != "individual")
    throw ConfigError(fmt::format("unknown plain mode '{}'", a.plain_mode));
  if (!a.start.empty()) {
    const auto epoch = parse_iso8601(a.start);
    if (!epoch) throw ConfigError(fmt::format("cannot parse start time '{}'", a.start));
    a.cfg.start_epoch = *epoch;
  }
  const Scenario sc = synthesize(a.cfg);
  const auto path = out_path(g, "scenario.json");
  save_scenario(sc, path);
  say(path);
}

// ingest --------------------------------------------------------------------

struct IngestArgs {
  std::string consumption, trips;
  int step_seconds = 1800;
};

void run_ingest(const Globals& g, const IngestArgs& a) {
  IngestOptions opt;
  opt.rng_seed = g.seed;
  opt.step_seconds = a.step_seconds;
  std::vector<std::string> warnings;
  const Scenario sc = ingest_scenario(a.consumption, a.trips, opt, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const auto path = out_path(g, "scenario.json");
  save_scenario(sc, path);
  say(path);
}

// relax ---------------------------------------------------------------------

struct RelaxArgs {
  std::string scenario;
  RelaxConfig cfg;
  bool verbose = false;
};

void run_relax(const Globals& g, const RelaxArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  RelaxConfig cfg = a.cfg;
  cfg.record_log = a.verbose;
  QPSolution sol;
  if (cfg.lambda > 0.0 && !cfg.per_household) {
    RelaxConfig base = cfg;
    base.lambda = 0.0;
    base.record_log = false;
    const QPSolution start = solve(sc, base);
    sol = solve(sc, cfg, &start.schedule);
  } else {
    sol = solve(sc, cfg);
  }
  const auto sched = out_path(g, "schedule.csv");
  save_schedule_csv(sc, sol.schedule, sched);
  say(sched);

  nlohmann::json summary;
  summary["lambda"] = cfg.lambda;
  summary["per_household"] = cfg.per_household;
  summary["objective_value"] = sol.objective_value;
  summary["std_kw"] = std::sqrt(sol.objective_value);
  summary["stabilization_value"] = sol.stabilization_value;
  summary["total_objective"] = sol.total_objective;
  summary["iterations"] = sol.iterations;
  summary["restarts"] = sol.restarts;
  summary["kkt_residual"] = sol.kkt_residual;
  const auto sum_path = out_path(g, "relax_summary.json");
  write_json(sum_path, summary);
  say(sum_path);

  if (a.verbose) {
    std::string log = "iteration,objective,residual\n";
    for (const auto& e : sol.log)
      log += fmt::format("{},{},{}\n", e.iteration, format_double(e.objective), format_double(e.residual));
    const auto log_path = out_path(g, "solver_log.csv");
    write_text_file(log_path, log);
    say(log_path);
  }
}

// dataset -------------------------------------------------------------------

struct DatasetArgs {
  std::string scenario, schedule, type = "a";
  bool no_endtime = false;
};

void run_dataset(const Globals& g, const DatasetArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  const Schedule s = load_schedule_csv(sc, a.schedule);
  ImitationDataset ds = build_dataset(sc, s, parse_layout(a.type, a.no_endtime));
  ds.source = a.schedule;
  const auto path = out_path(g, "dataset.csv");
  save_dataset_csv(ds, path);
  say(path);
}

// train-imitate -------------------------------------------------------------

struct TrainImitateArgs {
  std::string dataset;
  int hidden = 50;
  TrainConfig cfg;
};

void run_train_imitate(const Globals& g, TrainImitateArgs a) {
  a.cfg.seed = g.seed;
  const ImitationDataset ds = load_dataset_csv(a.dataset);
  const TrainResult res = train(ds, a.hidden, a.cfg);
  const auto model = out_path(g, "model.json");
  save_model(res.params, model);
  say(model);
  const auto log = out_path(g, "train_log.csv");
  save_train_log_csv(res, log);
  say(log);
  std::cout << fmt::format("best epoch {} validation mse {}\n", res.best_epoch,
                           format_double(res.best_validation_mse));
}

// train-direct --------------------------------------------------------------

struct TrainDirectArgs {
  std::string scenario, method = "cma", type = "a";
  bool no_endtime = false;
  int hidden = 5;
  CmaConfig cma;
  GdConfig gd;
};

void run_train_direct(const Globals& g, TrainDirectArgs a) {
  const Scenario sc = load_scenario(a.scenario);
  const NetSpec spec{parse_layout(a.type, a.no_endtime), a.hidden};
  DirectResult res;
  if (a.method == "cma") {
    a.cma.seed = g.seed;
    res = cma_optimize(sc, spec, a.cma);
  } else if (a.method == "gd") {
    a.gd.seed = g.seed;
    res = gd_optimize(sc, spec, a.gd);
  } else {
    throw ConfigError(fmt::format("unknown method '{}'", a.method));
  }
  const auto model = out_path(g, "model.json");
  save_model(res.params, model);
  say(model);
  const auto hist = out_path(g, "history.csv");
  save_history_csv(res.history, hist);
  say(hist);
  std::cout << fmt::format("fitness {} after {} evaluations\n", format_double(res.fitness), res.evals);
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, controller;
};

void run_simulate(const Globals& g, const SimulateArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  const SimResult res = run(sc, parse_controller_spec(a.controller));
  const auto load = out_path(g, "load.csv");
  save_load_csv(sc.grid, res.total_kw, load);
  say(load);
  const auto sched = out_path(g, "schedule.csv");
  save_schedule_csv(sc, res.schedule, sched);
  say(sched);
  std::string hh = "step,timestamp,household_id,kw\n";
  for (std::size_t t = 0; t < res.total_kw.size(); ++t) {
    const auto ts = format_iso8601(sc.grid.epoch_at(static_cast<int>(t)));
    for (std::size_t h = 0; h < sc.households.size(); ++h)
      hh += fmt::format("{},{},{},{}\n", t, ts, sc.households[h].id, format_double(res.household_kw[h][t]));
  }
  const auto hh_path = out_path(g, "households.csv");
  write_text_file(hh_path, hh);
  say(hh_path);
  std::cout << fmt::format("objective {}\n", format_double(metrics(res.total_kw, sc.grid).objective));
}

// evaluate / compare --------------------------------------------------------

void write_report(const Globals& g, const std::vector<CompareRow>& rows, const TimeGrid& grid) {
  const auto report = out_path(g, "report.json");
  write_text_file(report, report_json(rows));
  say(report);
  const auto plot = out_path(g, "plot.csv");
  write_text_file(plot, plot_csv(rows, grid));
  say(plot);
  for (const auto& r : rows)
    std::cout << fmt::format("{:<16} {:>10.4f} {:>8.4f}\n", r.label, r.objective_mean, r.objective_std);
}

struct EvaluateArgs {
  std::string scenario;
  std::vector<std::string> controllers;
  std::vector<std::string> schedules;  // label=path or path
};

void run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  if (a.controllers.empty() && a.schedules.empty())
    throw ConfigError("evaluate needs at least one --controller or --schedule");
  std::vector<CompareEntry> entries;
  for (const auto& c : a.controllers) {
    CompareEntry e;
    e.label = c;
    e.controller = parse_controller_spec(c);
    if (e.controller->kind == PolicyKind::Neural) e.group = EntryGroup::Imitation;
    entries.push_back(std::move(e));
  }
  for (const auto& s : a.schedules) {
    CompareEntry e;
    const auto eq = s.find('=');
    e.label = eq == std::string::npos ? s : s.substr(0, eq);
    e.group = EntryGroup::Qp;
    e.schedule = load_schedule_csv(sc, eq == std::string::npos ? s : s.substr(eq + 1));
    entries.push_back(std::move(e));
  }
  write_report(g, compare(sc, entries, {}), sc.grid);
}

struct CompareArgs {
  std::string spec;
  int reps = 10;
};

void run_compare(const Globals& g, const CompareArgs& a) {
  const CompareSpec spec = load_compare_spec(a.spec);
  write_report(g, compare(spec.scenario, spec.entries, repetition_seeds(g.seed, a.reps)), spec.scenario.grid);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinated EV charging: relaxation, imitation and evaluation toolkit", "evcharge"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value file with option defaults; flags override it");
  app.set_version_flag("--version",
                       fmt::format("evcharge {} (scenario format {})", kToolVersion, kScenarioFormatVersion));

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic neighborhood scenario");
  s_synth->add_option("--ev-households", synth.cfg.n_ev_households)->capture_default_str();
  s_synth->add_option("--plain-households", synth.cfg.n_plain_households)->capture_default_str();
  s_synth->add_option("--days", synth.cfg.days)->capture_default_str();
  s_synth->add_option("--step-seconds", synth.cfg.step_seconds)->capture_default_str();
  s_synth->add_option("--plain-mode", synth.plain_mode, "individual or aggregate")->capture_default_str();
  s_synth->add_option("--start", synth.start, "First step, ISO 8601 UTC");
  s_synth->add_option("--distance-log-mean", synth.cfg.trips.distance_log_mean)->capture_default_str();

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Build a scenario from consumption and trip CSVs");
  s_ingest->add_option("--consumption", ingest.consumption)->required()->check(CLI::ExistingFile);
  s_ingest->add_option("--trips", ingest.trips)->required()->check(CLI::ExistingFile);
  s_ingest->add_option("--step-seconds", ingest.step_seconds)->capture_default_str();

  RelaxArgs relax;
  auto* s_relax = app.add_subcommand("relax", "Solve the relaxed scheduling problem");
  s_relax->add_option("--scenario", relax.scenario)->required()->check(CLI::ExistingFile);
  s_relax->add_option("--lambda", relax.cfg.lambda, "Stabilization weight")->capture_default_str();
  s_relax->add_flag("--per-household", relax.cfg.per_household, "Solve each household alone");
  s_relax->add_option("--max-iters", relax.cfg.max_iters)->capture_default_str();
  s_relax->add_option("--kkt-tol", relax.cfg.kkt_tol)->capture_default_str();
  s_relax->add_flag("--verbose", relax.verbose, "Also write the solver log");

  DatasetArgs dataset;
  auto* s_dataset = app.add_subcommand("dataset", "Build an imitation dataset from a schedule");
  s_dataset->add_option("--scenario", dataset.scenario)->required()->check(CLI::ExistingFile);
  s_dataset->add_option("--schedule", dataset.schedule)->required()->check(CLI::ExistingFile);
  s_dataset->add_option("--type", dataset.type, "h or a")->capture_default_str();
  s_dataset->add_flag("--no-endtime", dataset.no_endtime);

  TrainImitateArgs ti;
  auto* s_ti = app.add_subcommand("train-imitate", "Fit a controller network to a dataset");
  s_ti->add_option("--dataset", ti.dataset)->required()->check(CLI::ExistingFile);
  s_ti->add_option("--hidden", ti.hidden)->capture_default_str();
  s_ti->add_option("--batch-size", ti.cfg.batch_size)->capture_default_str();
  s_ti->add_option("--max-epochs", ti.cfg.max_epochs)->capture_default_str();
  s_ti->add_option("--patience", ti.cfg.patience)->capture_default_str();
  s_ti->add_option("--train-fraction", ti.cfg.train_fraction)->capture_default_str();
  s_ti->add_option("--learning-rate", ti.cfg.learning_rate)->capture_default_str();

  TrainDirectArgs td;
  auto* s_td = app.add_subcommand("train-direct", "Optimize controller weights on the simulator");
  s_td->add_option("--scenario", td.scenario)->required()->check(CLI::ExistingFile);
  s_td->add_option("--method", td.method, "cma or gd")->capture_default_str();
  s_td->add_option("--type", td.type, "h or a")->capture_default_str();
  s_td->add_flag("--no-endtime", td.no_endtime);
  s_td->add_option("--hidden", td.hidden)->capture_default_str();
  s_td->add_option("--population", td.cma.population)->capture_default_str();
  s_td->add_option("--generations", td.cma.generations)->capture_default_str();
  s_td->add_option("--sigma", td.cma.sigma)->capture_default_str();
  s_td->add_option("--max-iters", td.gd.max_iters)->capture_default_str();
  s_td->add_option("--fd-epsilon", td.gd.fd_epsilon)->capture_default_str();

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Run one controller through the simulator");
  s_sim->add_option("--scenario", sim.scenario)->required()->check(CLI::ExistingFile);
  s_sim->add_option("--controller", sim.controller, "max, min, const or nn:<model>:<h|a>")->required();

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "Score controllers and schedules on a scenario");
  s_ev->add_option("--scenario", ev.scenario)->required()->check(CLI::ExistingFile);
  s_ev->add_option("--controller", ev.controllers, "Controller spec, repeatable");
  s_ev->add_option("--schedule", ev.schedules, "[label=]schedule.csv, repeatable");

  CompareArgs cmp;
  auto* s_cmp = app.add_subcommand("compare", "Run a comparison described by a spec file");
  s_cmp->add_option("--spec", cmp.spec)->required()->check(CLI::ExistingFile);
  s_cmp->add_option("--reps", cmp.reps, "Repetitions of trained entries")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*s_synth) run_synth(g, synth);
    else if (*s_ingest) run_ingest(g, ingest);
    else if (*s_relax) run_relax(g, relax);
    else if (*s_dataset) run_dataset(g, dataset);
    else if (*s_ti) run_train_imitate(g, ti);
    else if (*s_td) run_train_direct(g, td);
    else if (*s_sim) run_simulate(g, sim);
    else if (*s_ev) run_evaluate(g, ev);
    else if (*s_cmp) run_compare(g, cmp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
