#pragma once

#include <span>
#include <vector>

#include "evcharge/core.hpp"
#include "evcharge/error.hpp"

namespace evcharge {

struct RelaxConfig {
  double lambda = 0.0;         // stabilization weight; 0 gives the unregularized optimum
  bool per_household = false;  // each EV household optimized against its own load only
  int max_iters = 50000;
  double kkt_tol = 1e-6;
  double stall_tol = 1e-9;  // relative objective decrease over stall_window iterations
  int stall_window = 10;
  bool record_log = false;

  void validate() const;
};

struct SolverLogEntry {
  int iteration = 0;
  double objective = 0.0;
  double residual = 0.0;
};

struct QPSolution {
  Schedule schedule;
  double objective_value = 0.0;      // population variance of total load, kW^2
  double stabilization_value = 0.0;  // S
  double total_objective = 0.0;      // variance + lambda * S
  int iterations = 0;
  double kkt_residual = 0.0;
  int restarts = 0;
  std::vector<SolverLogEntry> log;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, QPSolution partial)
      : Error("nonconvergence", what), partial_(std::move(partial)) {}
  const QPSolution& partial() const noexcept { return partial_; }

 private:
  QPSolution partial_;
};

struct ObjectiveParts {
  double variance = 0.0;
  double stabilization = 0.0;
  double total = 0.0;
};

/// Variance of the total load over all steps plus lambda times the
/// stabilization term S, where S is evaluated on charging speeds normalized by
/// each request's cap.
ObjectiveParts objective(const Scenario& scenario, const Schedule& schedule, double lambda);

/// Gradient of objective(...).total with respect to every schedule entry.
Schedule objective_gradient(const Scenario& scenario, const Schedule& schedule, double lambda);

/// Euclidean projection onto {x : sum(x) = budget, 0 <= x <= cap}.
std::vector<double> project_capped_simplex(std::span<const double> v, double budget, double cap);

/// Largest violation of the first-order optimality conditions of the
/// capped-simplex constrained problem, over all requests.
double kkt_residual(const Scenario& scenario, const Schedule& schedule, double lambda);

/// Accelerated projected gradient with function-value restart and
/// backtracking. `warm_start`, when given, must be feasible.
QPSolution solve(const Scenario& scenario, const RelaxConfig& config,
                 const Schedule* warm_start = nullptr);

}  // namespace evcharge
