#pragma once

// Flat-vector form of the relaxed scheduling problem and the per-request
// kernels the solver runs every iteration. Each kernel has an OpenMP version
// (namespace kernels) and a plain serial version (namespace reference) that
// the tests compare against.

#include <span>
#include <vector>

#include "evcharge/core.hpp"

namespace evcharge::relax {

struct Problem {
  int n_steps = 0;
  double step_hours = 0.5;
  double lambda = 0.0;
  std::vector<double> base_kw;
  std::vector<int> request_ids;
  std::vector<int> start;
  std::vector<int> length;
  std::vector<std::size_t> offset;  // first variable of each request
  std::vector<double> cap;
  std::vector<double> budget;
  std::size_t n_vars = 0;

  std::size_t n_requests() const { return request_ids.size(); }
  std::span<const double> row(std::span<const double> x, std::size_t r) const {
    return x.subspan(offset[r], static_cast<std::size_t>(length[r]));
  }
  std::span<double> row(std::span<double> x, std::size_t r) const {
    return x.subspan(offset[r], static_cast<std::size_t>(length[r]));
  }
};

Problem make_problem(const Scenario& scenario, double lambda);
/// One household's requests against that household's own baseline.
Problem make_household_problem(const Scenario& scenario, int household_id, double lambda);

std::vector<double> flatten(const Problem& p, const Schedule& schedule);
Schedule unflatten(const Problem& p, std::span<const double> x);
/// Each request charging R/L every step.
std::vector<double> uniform_start(const Problem& p);

void accumulate_load(const Problem& p, std::span<const double> x, std::span<double> load_kw);
/// Population variance; writes the mean when asked.
double load_variance(std::span<const double> load_kw, double* mean = nullptr);
double stabilization(const Problem& p, std::span<const double> x);

/// Projection of one row; writes into out (same length as v).
void project_row(std::span<const double> v, double budget, double cap, std::span<double> out);

/// Per-request violation for a row given its gradient.
double kkt_row(std::span<const double> x, std::span<const double> g, double cap);

namespace kernels {
void gradient(const Problem& p, std::span<const double> x, std::span<const double> load_kw,
              double mean_kw, std::span<double> g);
void project_rows(const Problem& p, std::span<const double> v, std::span<double> out);
double kkt_residual(const Problem& p, std::span<const double> x, std::span<const double> g);
}  // namespace kernels

namespace reference {
void gradient(const Problem& p, std::span<const double> x, std::span<const double> load_kw,
              double mean_kw, std::span<double> g);
void project_rows(const Problem& p, std::span<const double> v, std::span<double> out);
double kkt_residual(const Problem& p, std::span<const double> x, std::span<const double> g);
}  // namespace reference

}  // namespace evcharge::relax
