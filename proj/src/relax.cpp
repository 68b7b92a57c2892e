#include "evcharge/relax.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <fmt/format.h>

#include "evcharge/relax_kernels.hpp"

namespace evcharge {

using relax::Problem;

void RelaxConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (max_iters <= 0 || kkt_tol <= 0.0 || stall_tol <= 0.0 || stall_window <= 0)
    throw ConfigError("solver tolerances and limits must be positive");
}

ObjectiveParts objective(const Scenario& scenario, const Schedule& schedule, double lambda) {
  const Problem p = relax::make_problem(scenario, lambda);
  const auto x = relax::flatten(p, schedule);
  std::vector<double> load(static_cast<std::size_t>(p.n_steps));
  relax::accumulate_load(p, x, load);
  ObjectiveParts out;
  out.variance = relax::load_variance(load);
  out.stabilization = relax::stabilization(p, x);
  out.total = out.variance + lambda * out.stabilization;
  return out;
}

Schedule objective_gradient(const Scenario& scenario, const Schedule& schedule, double lambda) {
  const Problem p = relax::make_problem(scenario, lambda);
  const auto x = relax::flatten(p, schedule);
  std::vector<double> load(static_cast<std::size_t>(p.n_steps)), g(p.n_vars);
  relax::accumulate_load(p, x, load);
  double mean = 0.0;
  relax::load_variance(load, &mean);
  relax::kernels::gradient(p, x, load, mean, g);
  return relax::unflatten(p, g);
}

std::vector<double> project_capped_simplex(std::span<const double> v, double budget, double cap) {
  if (!(cap > 0.0)) throw InfeasibleError("cap must be positive");
  std::vector<double> out(v.size());
  relax::project_row(v, budget, cap, out);
  return out;
}

double kkt_residual(const Scenario& scenario, const Schedule& schedule, double lambda) {
  const Problem p = relax::make_problem(scenario, lambda);
  const auto x = relax::flatten(p, schedule);
  std::vector<double> load(static_cast<std::size_t>(p.n_steps)), g(p.n_vars);
  relax::accumulate_load(p, x, load);
  double mean = 0.0;
  relax::load_variance(load, &mean);
  relax::kernels::gradient(p, x, load, mean, g);
  return relax::kernels::kkt_residual(p, x, g);
}

namespace {

class Evaluator {
 public:
  explicit Evaluator(const Problem& p) : p_(p), load_(static_cast<std::size_t>(p.n_steps)) {}

  double value(std::span<const double> x) {
    relax::accumulate_load(p_, x, load_);
    double v = relax::load_variance(load_);
    if (p_.lambda != 0.0) v += p_.lambda * relax::stabilization(p_, x);
    return v;
  }

  void gradient(std::span<const double> x, std::span<double> g) {
    relax::accumulate_load(p_, x, load_);
    double mean = 0.0;
    relax::load_variance(load_, &mean);
    relax::kernels::gradient(p_, x, load_, mean, g);
  }

 private:
  const Problem& p_;
  std::vector<double> load_;
};

double initial_step(const Problem& p) {
  // Upper bound on the Hessian norm: overlapping requests for the variance
  // part, 4x the difference coefficient for the stabilizer.
  std::vector<int> overlap(static_cast<std::size_t>(p.n_steps), 0);
  double stab = 0.0;
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    for (int k = 0; k < p.length[r]; ++k) ++overlap[static_cast<std::size_t>(p.start[r] + k)];
    if (p.length[r] > 1)
      stab = std::max(stab, 8.0 / ((p.length[r] - 1) * p.cap[r] * p.cap[r]));
  }
  const int max_overlap = overlap.empty() ? 1 : std::max(1, *std::max_element(overlap.begin(), overlap.end()));
  const double lip =
      2.0 * max_overlap / (p.n_steps * p.step_hours * p.step_hours) + p.lambda * stab;
  return 1.0 / lip;
}

struct RunResult {
  std::vector<double> x;
  int iterations = 0;
  int restarts = 0;
  double kkt = 0.0;
  std::vector<SolverLogEntry> log;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

RunResult run_apg(const Problem& p, const RelaxConfig& cfg, std::vector<double> x0) {
  RunResult res;
  const std::size_t n = p.n_vars;
  Evaluator eval(p);
  std::vector<double> x(n), y, g_x(n), g_y(n), z(n), x_new(n);
  relax::kernels::project_rows(p, x0, x);
  double f_x = eval.value(x);
  eval.gradient(x, g_x);
  res.kkt = relax::kernels::kkt_residual(p, x, g_x);
  if (cfg.record_log) res.log.push_back({0, f_x, res.kkt});
  if (n == 0 || res.kkt <= cfg.kkt_tol) {
    res.x = std::move(x);
    return res;
  }

  y = x;
  bool y_is_x = true;
  double momentum_t = 1.0;
  double eta = initial_step(p);
  std::vector<double> history{f_x};
  std::vector<double> kkt_history{res.kkt};
  double best_before = res.kkt;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    double f_y;
    if (y_is_x) {
      g_y = g_x;
      f_y = f_x;
    } else {
      f_y = eval.value(y);
      eval.gradient(y, g_y);
    }

    eta *= 2.0;
    double f_new = 0.0;
    for (int ls = 0; ls < 80; ++ls) {
      for (std::size_t i = 0; i < n; ++i) z[i] = y[i] - eta * g_y[i];
      relax::kernels::project_rows(p, z, x_new);
      for (std::size_t i = 0; i < n; ++i) z[i] = x_new[i] - y[i];
      const double model = f_y + dot(g_y, z) + dot(z, z) / (2.0 * eta);
      f_new = eval.value(x_new);
      if (f_new <= model + 1e-15 * std::abs(f_y)) break;
      eta *= 0.5;
    }

    if (f_new > f_x) {
      if (!y_is_x) {
        // Objective went up: drop the momentum and take a plain step from x.
        ++res.restarts;
        momentum_t = 1.0;
        y = x;
        y_is_x = true;
        continue;
      }
      break;  // no descent even from x; numerically converged
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    const double beta = (momentum_t - 1.0) / t_next;
    for (std::size_t i = 0; i < n; ++i) y[i] = x_new[i] + beta * (x_new[i] - x[i]);
    y_is_x = beta == 0.0;
    x.swap(x_new);
    f_x = f_new;
    momentum_t = t_next;

    eval.gradient(x, g_x);
    res.kkt = relax::kernels::kkt_residual(p, x, g_x);
    if (cfg.record_log) res.log.push_back({it, f_x, res.kkt});
    if (res.kkt <= cfg.kkt_tol) break;

    // Stalled: the objective barely moved over the window and the certificate
    // did not improve on the best value seen before the window.
    history.push_back(f_x);
    kkt_history.push_back(res.kkt);
    const std::size_t w = static_cast<std::size_t>(cfg.stall_window);
    if (history.size() > w) {
      const std::size_t at = history.size() - 1 - w;
      const double drop = history[at] - f_x;
      best_before = std::min(best_before, kkt_history[at]);
      const double recent = *std::min_element(kkt_history.begin() + static_cast<std::ptrdiff_t>(at) + 1, kkt_history.end());
      if (drop <= cfg.stall_tol * std::max(std::abs(f_x), 1e-300) && recent >= best_before) break;
    }
  }
  res.x = std::move(x);
  return res;
}

void check_feasible(const Scenario& scenario) {
  for (const auto& r : scenario.requests)
    if (!r.feasible())
      throw InfeasibleError(fmt::format("request {} needs {} kWh but can take at most {}", r.id,
                                        r.energy_kwh, r.length() * r.cap_kwh));
}

QPSolution finish(const Scenario& scenario, const RelaxConfig& cfg, Schedule schedule) {
  QPSolution sol;
  sol.schedule = std::move(schedule);
  const auto parts = objective(scenario, sol.schedule, cfg.lambda);
  sol.objective_value = parts.variance;
  sol.stabilization_value = parts.stabilization;
  sol.total_objective = parts.total;
  return sol;
}

}  // namespace

QPSolution solve(const Scenario& scenario, const RelaxConfig& config, const Schedule* warm_start) {
  config.validate();
  check_feasible(scenario);

  if (!config.per_household) {
    const Problem p = relax::make_problem(scenario, config.lambda);
    auto x0 = warm_start ? relax::flatten(p, *warm_start) : relax::uniform_start(p);
    RunResult run = run_apg(p, config, std::move(x0));
    QPSolution sol = finish(scenario, config, relax::unflatten(p, run.x));
    sol.iterations = run.iterations;
    sol.restarts = run.restarts;
    sol.kkt_residual = run.kkt;
    sol.log = std::move(run.log);
    if (sol.kkt_residual > 10.0 * config.kkt_tol)
      throw NonConvergenceError(
          fmt::format("stopped after {} iterations with KKT residual {:.3e} (tolerance {:.1e})",
                      sol.iterations, sol.kkt_residual, config.kkt_tol),
          std::move(sol));
    return sol;
  }

  // One independent problem per EV household, each seeing only its own load.
  std::vector<int> ids;
  for (const auto& h : scenario.households)
    if (h.has_ev) ids.push_back(h.id);
  std::vector<Problem> problems;
  for (int id : ids) problems.push_back(relax::make_household_problem(scenario, id, config.lambda));
  std::vector<RunResult> runs(problems.size());
  std::vector<std::exception_ptr> errors(problems.size());
  const auto n = static_cast<std::ptrdiff_t>(problems.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      auto x0 = warm_start ? relax::flatten(problems[k], *warm_start)
                           : relax::uniform_start(problems[k]);
      runs[k] = run_apg(problems[k], config, std::move(x0));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Schedule merged;
  int iterations = 0, restarts = 0;
  double kkt = 0.0;
  for (std::size_t k = 0; k < problems.size(); ++k) {
    auto part = relax::unflatten(problems[k], runs[k].x);
    merged.rows.merge(part.rows);
    iterations = std::max(iterations, runs[k].iterations);
    restarts += runs[k].restarts;
    kkt = std::max(kkt, runs[k].kkt);
  }
  QPSolution sol = finish(scenario, config, std::move(merged));
  sol.iterations = iterations;
  sol.restarts = restarts;
  sol.kkt_residual = kkt;
  if (kkt > 10.0 * config.kkt_tol)
    throw NonConvergenceError(
        fmt::format("per-household solve left KKT residual {:.3e} (tolerance {:.1e})", kkt,
                    config.kkt_tol),
        std::move(sol));
  return sol;
}

}  // namespace evcharge
