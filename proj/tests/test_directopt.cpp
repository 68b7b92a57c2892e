#include "doctest.h"

#include <cmath>
#include <mutex>
#include <set>

#include "evcharge/directopt.hpp"
#include "evcharge/error.hpp"
#include "evcharge/eval.hpp"
#include "evcharge/sim.hpp"
#include "fixtures.hpp"

using namespace evcharge;

namespace {

double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double population_std(const std::vector<double>& v, std::size_t from) {
  double mean = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) mean += v[i];
  mean /= static_cast<double>(v.size() - from);
  double acc = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) acc += (v[i] - mean) * (v[i] - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - from));
}

}  // namespace

TEST_SUITE("directopt") {

TEST_CASE("CMA-ES solves the sphere") {
  CmaConfig cfg;
  cfg.population = 10;
  cfg.generations = 200;
  cfg.sigma = 0.5;
  cfg.seed = 11;
  const auto res = cma_es(sphere, std::vector<double>(10, 1.0), cfg);
  CHECK(res.evals <= 2000);
  CHECK(res.best_fitness < 1e-10);
  CHECK(sphere(res.best) == res.best_fitness);
}

TEST_CASE("CMA-ES history is monotone and reproducible") {
  CmaConfig cfg;
  cfg.population = 8;
  cfg.generations = 40;
  cfg.seed = 5;
  Objective rosen = [](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
      s += 100 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1 - x[i], 2);
    return s;
  };
  const auto a = cma_es(rosen, std::vector<double>(4, 0.0), cfg);
  const auto b = cma_es(rosen, std::vector<double>(4, 0.0), cfg);
  REQUIRE(a.history.size() == 40);
  for (std::size_t i = 1; i < a.history.size(); ++i) {
    CHECK(a.history[i].best_fitness <= a.history[i - 1].best_fitness);
    CHECK(a.history[i].evals == a.history[i - 1].evals + cfg.population);
  }
  CHECK(a.best == b.best);
  CHECK(a.best_fitness == b.best_fitness);
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].best_fitness == b.history[i].best_fitness);
}

TEST_CASE("the returned point was evaluated") {
  std::mutex m;
  std::set<std::vector<double>> seen;
  Objective f = [&](std::span<const double> x) {
    std::lock_guard lock(m);
    seen.insert({x.begin(), x.end()});
    return sphere(x) + 1.0;
  };
  CmaConfig cfg;
  cfg.generations = 15;
  const auto res = cma_es(f, std::vector<double>(3, 2.0), cfg);
  CHECK(seen.count(res.best) == 1);

  seen.clear();
  GdConfig g;
  g.max_iters = 10;
  const auto gd = numerical_gd(f, std::vector<double>(3, 2.0), g);
  CHECK(seen.count(gd.best) == 1);
}

TEST_CASE("CMA-ES restarts when the distribution breaks") {
  Objective nan_everywhere = [](std::span<const double>) { return std::nan(""); };
  CmaConfig cfg;
  cfg.generations = 50;
  cfg.population = 6;
  const auto res = cma_es(nan_everywhere, {0.0, 0.0}, cfg);
  CHECK(res.best.size() == 2);
  CHECK(res.restarts <= cfg.max_restarts);
}

TEST_CASE("invalid optimizer settings are rejected") {
  CmaConfig c;
  c.population = 3;
  CHECK_THROWS_AS(cma_es(sphere, {1.0}, c), ConfigError);
  GdConfig g;
  g.step_sizes = {0.1, 0.01};
  CHECK_THROWS_AS(numerical_gd(sphere, {1.0}, g), ConfigError);
  g.step_sizes = {};
  CHECK_THROWS_AS(numerical_gd(sphere, {1.0}, g), ConfigError);
}

TEST_CASE("numerical GD converges on a quadratic") {
  Objective q = [](std::span<const double> x) {
    return std::pow(x[0] - 1.0, 2) + 2.0 * std::pow(x[1] + 0.5, 2);
  };
  GdConfig cfg;
  cfg.fd_epsilon = 1e-7;
  cfg.max_iters = 500;
  const auto res = numerical_gd(q, {3.0, 3.0}, cfg);
  CHECK(std::abs(res.best[0] - 1.0) < 1e-3);
  CHECK(std::abs(res.best[1] + 0.5) < 1e-3);
  CHECK(res.best_fitness < 1e-6);
  for (std::size_t i = 1; i + 1 < res.history.size(); ++i)
    CHECK(res.history[i].best_fitness < res.history[i - 1].best_fitness);
}

TEST_CASE("numerical GD stops on a flat objective") {
  Objective flat = [](std::span<const double>) { return 2.0; };
  const auto res = numerical_gd(flat, {0.3, 0.4}, GdConfig{});
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].iteration == 1);
  CHECK(res.best == std::vector<double>{0.3, 0.4});
  CHECK(res.best_fitness == 2.0);
}

TEST_CASE("fitness is deterministic and matches a saturated controller") {
  const auto sc = fixture::small_synthetic(2, 3);
  const NetSpec spec{{ControllerType::A, true}, 5};
  const auto theta = random_start(spec, 9);
  CHECK(theta.size() == spec.theta_size());
  CHECK(fitness(theta, sc, spec) == fitness(theta, sc, spec));

  std::vector<double> saturated(spec.theta_size(), 0.0);
  saturated.back() = 60.0;
  const auto max_run = run(sc, Controller::max());
  const double expected = population_std(max_run.total_kw, static_cast<std::size_t>(sc.grid.steps_per_day()));
  CHECK(fitness(saturated, sc, spec) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(metrics(max_run.total_kw, sc.grid).objective == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("fitness needs more than the warm-up day") {
  auto sc = fixture::small_synthetic(2, 1);
  const NetSpec spec{{ControllerType::H, true}, 3};
  CHECK_THROWS_AS(fitness(random_start(spec, 1), sc, spec), ContractError);
}

TEST_CASE("direct optimizers improve on their start") {
  const auto sc = fixture::small_synthetic(3, 3);
  const NetSpec spec{{ControllerType::H, false}, 3};
  CmaConfig cfg;
  cfg.generations = 5;
  cfg.seed = 2;
  const auto res = cma_optimize(sc, spec, cfg);
  CHECK(res.params.theta.size() == spec.theta_size());
  CHECK(res.fitness == doctest::Approx(fitness(res.params.theta, sc, spec)).epsilon(1e-12));
  CHECK(res.evals == 5L * cfg.population);

  GdConfig g;
  g.max_iters = 3;
  const auto gd = gd_optimize(sc, spec, g);
  CHECK(gd.fitness <= fitness(random_start(spec, g.seed), sc, spec));
}

}
