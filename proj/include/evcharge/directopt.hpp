#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "evcharge/core.hpp"
#include "evcharge/features.hpp"
#include "evcharge/net.hpp"

namespace evcharge {

/// Must be safe to call concurrently from several threads.
using Objective = std::function<double(std::span<const double>)>;

struct CmaConfig {
  int population = 16;
  int generations = 250;
  double sigma = 0.1;
  std::uint64_t seed = 1;
  int max_restarts = 3;

  void validate() const;
};

struct GdConfig {
  int max_iters = 250;
  std::vector<double> step_sizes{1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 10.0};
  double fd_epsilon = 1e-4;
  std::uint64_t seed = 1;

  void validate() const;
};

struct HistoryEntry {
  int iteration = 0;
  double best_fitness = 0.0;
  long evals = 0;
};

struct OptimizeResult {
  std::vector<double> best;  // always a point that was evaluated
  double best_fitness = 0.0;
  long evals = 0;
  int restarts = 0;
  std::vector<HistoryEntry> history;
};

/// Objective values of many points, evaluated in parallel; entry i belongs to
/// points[i] whatever the evaluation order.
std::vector<double> evaluate_batch(const Objective& f, const std::vector<std::vector<double>>& points);

namespace reference {
std::vector<double> evaluate_batch(const Objective& f, const std::vector<std::vector<double>>& points);
}  // namespace reference

/// (mu/mu_w, lambda)-CMA-ES with the default strategy parameters for the
/// given dimension and population size.
OptimizeResult cma_es(const Objective& f, std::vector<double> mean, const CmaConfig& config);

/// Forward-difference gradient descent; each iteration tries every step size
/// and keeps the best candidate if it improves.
OptimizeResult numerical_gd(const Objective& f, std::vector<double> start, const GdConfig& config);

/// Network shape and inputs for the direct-optimization baselines.
struct NetSpec {
  FeatureLayout layout;
  int hidden_dim = 5;

  std::size_t theta_size() const { return NetParams::size_for(layout.input_dim(), hidden_dim); }
};

/// Standard deviation of the simulated total load after the warm-up day.
double fitness(std::span<const double> theta, const Scenario& scenario, const NetSpec& spec);

/// theta drawn from N(0, 0.1^2).
std::vector<double> random_start(const NetSpec& spec, std::uint64_t seed);

struct DirectResult {
  NetParams params;
  double fitness = 0.0;
  long evals = 0;
  std::vector<HistoryEntry> history;
};

DirectResult cma_optimize(const Scenario& scenario, const NetSpec& spec, const CmaConfig& config);
DirectResult gd_optimize(const Scenario& scenario, const NetSpec& spec, const GdConfig& config);

/// `iteration,best_fitness,evals`.
void save_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path);

}  // namespace evcharge
