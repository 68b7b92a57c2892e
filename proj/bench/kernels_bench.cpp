#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "evcharge/directopt.hpp"
#include "evcharge/net.hpp"
#include "evcharge/relax_kernels.hpp"
#include "evcharge/scenario.hpp"

using namespace evcharge;

namespace {

// A neighborhood larger than the desk scenario so per-request loops dominate.
struct RelaxFixture {
  Scenario sc;
  relax::Problem p;
  std::vector<double> x, v, load, g, out;
  double mean = 0.0;

  RelaxFixture() {
    SynthConfig cfg;
    cfg.n_ev_households = 200;
    cfg.n_plain_households = 50;
    cfg.days = 28;
    sc = synthesize(cfg);
    p = relax::make_problem(sc, 0.1);
    x = relax::uniform_start(p);
    v = x;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.3);
    for (double& e : v) e += n(rng);
    load.resize(static_cast<std::size_t>(p.n_steps));
    relax::accumulate_load(p, x, load);
    relax::load_variance(load, &mean);
    g.resize(p.n_vars);
    out.resize(p.n_vars);
  }
};

RelaxFixture& relax_fixture() {
  static RelaxFixture f;
  return f;
}

void BM_Gradient(benchmark::State& state) {
  auto& f = relax_fixture();
  for (auto _ : state) {
    if (state.range(0)) relax::kernels::gradient(f.p, f.x, f.load, f.mean, f.g);
    else relax::reference::gradient(f.p, f.x, f.load, f.mean, f.g);
    benchmark::DoNotOptimize(f.g.data());
  }
}
BENCHMARK(BM_Gradient)->ArgName("parallel")->Arg(0)->Arg(1);

void BM_ProjectRows(benchmark::State& state) {
  auto& f = relax_fixture();
  for (auto _ : state) {
    if (state.range(0)) relax::kernels::project_rows(f.p, f.v, f.out);
    else relax::reference::project_rows(f.p, f.v, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}
BENCHMARK(BM_ProjectRows)->ArgName("parallel")->Arg(0)->Arg(1);

void BM_KktResidual(benchmark::State& state) {
  auto& f = relax_fixture();
  relax::kernels::gradient(f.p, f.x, f.load, f.mean, f.g);
  for (auto _ : state) {
    const double r = state.range(0) ? relax::kernels::kkt_residual(f.p, f.x, f.g)
                                    : relax::reference::kkt_residual(f.p, f.x, f.g);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_KktResidual)->ArgName("parallel")->Arg(0)->Arg(1);

void BM_GradMse(benchmark::State& state) {
  const int rows = 4096, in = 20, hidden = 50;
  NetParams params = init_params(in, hidden, 3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> features(static_cast<std::size_t>(rows * in)), targets(static_cast<std::size_t>(rows));
  for (double& e : features) e = n(rng);
  for (double& e : targets) e = std::abs(n(rng)) / 4.0;
  for (auto _ : state) {
    auto g = state.range(0) ? grad_mse(params, features, targets)
                            : reference::grad_mse(params, features, targets);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_GradMse)->ArgName("parallel")->Arg(0)->Arg(1);

void BM_EvaluateBatch(benchmark::State& state) {
  SynthConfig cfg;
  cfg.n_ev_households = 10;
  cfg.n_plain_households = 10;
  cfg.days = 7;
  const Scenario sc = synthesize(cfg);
  const NetSpec spec{{ControllerType::A, true}, 5};
  Objective f = [&](std::span<const double> theta) { return fitness(theta, sc, spec); };
  std::vector<std::vector<double>> points;
  for (std::uint64_t s = 0; s < 16; ++s) points.push_back(random_start(spec, s));
  for (auto _ : state) {
    auto out = state.range(0) ? evaluate_batch(f, points) : reference::evaluate_batch(f, points);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_EvaluateBatch)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
