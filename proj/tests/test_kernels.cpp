#include "doctest.h"

#include <random>

#include "evcharge/directopt.hpp"
#include "evcharge/net.hpp"
#include "evcharge/relax_kernels.hpp"
#include "fixtures.hpp"

using namespace evcharge;

TEST_SUITE("kernels") {

TEST_CASE("parallel relax kernels agree with the serial reference") {
  const auto sc = fixture::desk();
  for (double lambda : {0.0, 0.1}) {
    const auto p = relax::make_problem(sc, lambda);
    REQUIRE(p.n_requests() > 64);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.5, 1.0);
    std::vector<double> v(p.n_vars);
    for (double& e : v) e = n(rng);

    std::vector<double> a(p.n_vars), b(p.n_vars);
    relax::kernels::project_rows(p, v, a);
    relax::reference::project_rows(p, v, b);
    CHECK(a == b);

    std::vector<double> load(static_cast<std::size_t>(p.n_steps));
    relax::accumulate_load(p, a, load);
    double mean = 0.0;
    relax::load_variance(load, &mean);
    std::vector<double> ga(p.n_vars), gb(p.n_vars);
    relax::kernels::gradient(p, a, load, mean, ga);
    relax::reference::gradient(p, a, load, mean, gb);
    CHECK(ga == gb);
    CHECK(relax::kernels::kkt_residual(p, a, ga) == relax::reference::kkt_residual(p, a, gb));
  }
}

TEST_CASE("flatten and unflatten are inverse") {
  const auto sc = fixture::small_synthetic(2, 3);
  const auto p = relax::make_problem(sc, 0.0);
  const auto x = relax::uniform_start(p);
  const auto s = relax::unflatten(p, x);
  CHECK(relax::flatten(p, s) == x);
  for (const auto& r : sc.requests) {
    double sum = 0.0;
    for (double e : s.rows.at(r.id)) sum += e;
    CHECK(sum == doctest::Approx(r.energy_kwh));
  }
}

TEST_CASE("parallel network gradient matches the serial one and is reproducible") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto params = init_params(20, 50, 3);
  const std::size_t rows = 1000;
  std::vector<double> f(rows * 20), y(rows);
  for (double& e : f) e = n(rng);
  for (double& e : y) e = 0.5 + 0.3 * std::tanh(n(rng));
  const auto a = grad_mse(params, f, y);
  const auto b = reference::grad_mse(params, f, y);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(grad_mse(params, f, y) == a);
}

TEST_CASE("parallel batch evaluation keeps entries in point order") {
  Objective f = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 37; ++i) pts.push_back({double(i), 0.5 * i});
  CHECK(evaluate_batch(f, pts) == reference::evaluate_batch(f, pts));
}

TEST_CASE("batch evaluation propagates exceptions") {
  Objective f = [](std::span<const double> x) -> double {
    if (x[0] > 3) throw std::runtime_error("boom");
    return x[0];
  };
  std::vector<std::vector<double>> pts{{1.0}, {2.0}, {5.0}};
  CHECK_THROWS_AS(evaluate_batch(f, pts), std::runtime_error);
}

}
