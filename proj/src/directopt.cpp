#include "evcharge/directopt.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "evcharge/controllers.hpp"
#include "evcharge/error.hpp"
#include "evcharge/io.hpp"
#include "evcharge/sim.hpp"

namespace evcharge {

void CmaConfig::validate() const {
  if (population < 4) throw ConfigError("CMA-ES population must be at least 4");
  if (generations <= 0 || !(sigma > 0.0) || max_restarts < 0)
    throw ConfigError("CMA-ES generations and sigma must be positive");
}

void GdConfig::validate() const {
  if (max_iters <= 0 || !(fd_epsilon > 0.0)) throw ConfigError("GD limits must be positive");
  if (step_sizes.empty()) throw ConfigError("GD needs at least one step size");
  for (std::size_t i = 0; i < step_sizes.size(); ++i)
    if (!(step_sizes[i] > 0.0) || (i > 0 && !(step_sizes[i] > step_sizes[i - 1])))
      throw ConfigError("GD step sizes must be positive and strictly ascending");
}

std::vector<double> evaluate_batch(const Objective& f, const std::vector<std::vector<double>>& points) {
  std::vector<double> out(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = f(points[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace reference {
std::vector<double> evaluate_batch(const Objective& f, const std::vector<std::vector<double>>& points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(f(p));
  return out;
}
}  // namespace reference

namespace {

// Index of the smallest value; ties go to the lowest index. NaN counts as +inf.
std::size_t argmin(const std::vector<double>& v) {
  std::size_t best = 0;
  auto key = [](double x) { return std::isnan(x) ? std::numeric_limits<double>::infinity() : x; };
  for (std::size_t i = 1; i < v.size(); ++i)
    if (key(v[i]) < key(v[best])) best = i;
  return best;
}

}  // namespace

OptimizeResult cma_es(const Objective& f, std::vector<double> mean0, const CmaConfig& config) {
  config.validate();
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = static_cast<int>(mean0.size());
  if (n == 0) throw ConfigError("CMA-ES needs a non-empty start point");
  const int lambda = config.population;
  const int mu = lambda / 2;

  VectorXd w(mu);
  for (int i = 0; i < mu; ++i) w[i] = std::log(mu + 0.5) - std::log(i + 1.0);
  w /= w.sum();
  const double mueff = 1.0 / w.squaredNorm();
  const double N = n;
  const double cc = (4.0 + mueff / N) / (N + 4.0 + 2.0 * mueff / N);
  const double cs = (mueff + 2.0) / (N + mueff + 5.0);
  const double c1 = 2.0 / ((N + 1.3) * (N + 1.3) + mueff);
  const double cmu = std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((N + 2.0) * (N + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (N + 1.0)) - 1.0) + cs;
  const double chi_n = std::sqrt(N) * (1.0 - 1.0 / (4.0 * N) + 1.0 / (21.0 * N * N));

  VectorXd mean = Eigen::Map<const VectorXd>(mean0.data(), n);
  double sigma = config.sigma;
  MatrixXd C = MatrixXd::Identity(n, n), B = MatrixXd::Identity(n, n), inv_sqrt_c = MatrixXd::Identity(n, n);
  VectorXd D = VectorXd::Ones(n), pc = VectorXd::Zero(n), ps = VectorXd::Zero(n);
  int since_restart = 0;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  OptimizeResult res;
  res.best_fitness = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> xs(static_cast<std::size_t>(lambda), std::vector<double>(static_cast<std::size_t>(n)));
  MatrixXd ys(n, lambda);

  for (int gen = 1; gen <= config.generations; ++gen) {
    for (int k = 0; k < lambda; ++k) {
      VectorXd z(n);
      for (int i = 0; i < n; ++i) z[i] = normal(rng);
      ys.col(k) = B * D.cwiseProduct(z);
      const VectorXd x = mean + sigma * ys.col(k);
      std::copy(x.data(), x.data() + n, xs[static_cast<std::size_t>(k)].begin());
    }
    const auto fit = evaluate_batch(f, xs);
    res.evals += lambda;

    std::vector<int> order(static_cast<std::size_t>(lambda));
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](int i) {
      const double v = fit[static_cast<std::size_t>(i)];
      return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
    if (key(order[0]) < res.best_fitness || res.best.empty()) {
      res.best_fitness = key(order[0]);
      res.best = xs[static_cast<std::size_t>(order[0])];
    }
    res.history.push_back({gen, res.best_fitness, res.evals});

    VectorXd y_w = VectorXd::Zero(n);
    for (int i = 0; i < mu; ++i) y_w += w[i] * ys.col(order[static_cast<std::size_t>(i)]);
    mean += sigma * y_w;
    ++since_restart;

    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * (inv_sqrt_c * y_w);
    const double ps_norm = ps.norm();
    const bool hsig =
        ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * since_restart)) / chi_n < 1.4 + 2.0 / (N + 1.0);
    pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * y_w;

    MatrixXd rank_mu = MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) {
      const auto y = ys.col(order[static_cast<std::size_t>(i)]);
      rank_mu.noalias() += w[i] * y * y.transpose();
    }
    C = (1.0 - c1 - cmu) * C + c1 * (pc * pc.transpose() + (hsig ? 0.0 : cc * (2.0 - cc)) * C) + cmu * rank_mu;
    sigma *= std::exp((cs / damps) * (ps_norm / chi_n - 1.0));

    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
    const bool broken = eig.info() != Eigen::Success || !eig.eigenvalues().allFinite() ||
                        eig.eigenvalues().minCoeff() <= 0.0 || !std::isfinite(sigma);
    if (broken) {
      if (res.restarts >= config.max_restarts) break;
      // Restart from the current mean with a fresh isotropic distribution.
      ++res.restarts;
      sigma = 2.0 * (std::isfinite(sigma) ? sigma : config.sigma);
      C.setIdentity();
      B.setIdentity();
      D.setOnes();
      inv_sqrt_c.setIdentity();
      pc.setZero();
      ps.setZero();
      since_restart = 0;
      continue;
    }
    B = eig.eigenvectors();
    D = eig.eigenvalues().cwiseSqrt();
    inv_sqrt_c = B * D.cwiseInverse().asDiagonal() * B.transpose();
  }
  return res;
}

OptimizeResult numerical_gd(const Objective& f, std::vector<double> start, const GdConfig& config) {
  config.validate();
  const std::size_t n = start.size();
  OptimizeResult res;
  res.best = std::move(start);
  res.best_fitness = f(res.best);
  res.evals = 1;

  std::vector<std::vector<double>> probes(n, res.best);
  std::vector<std::vector<double>> candidates(config.step_sizes.size(), res.best);
  std::vector<double> grad(n);
  for (int it = 1; it <= config.max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      probes[i] = res.best;
      probes[i][i] += config.fd_epsilon;
    }
    const auto fp = evaluate_batch(f, probes);
    res.evals += static_cast<long>(n);
    for (std::size_t i = 0; i < n; ++i) grad[i] = (fp[i] - res.best_fitness) / config.fd_epsilon;

    for (std::size_t s = 0; s < config.step_sizes.size(); ++s)
      for (std::size_t i = 0; i < n; ++i)
        candidates[s][i] = res.best[i] - config.step_sizes[s] * grad[i];
    const auto fc = evaluate_batch(f, candidates);
    res.evals += static_cast<long>(candidates.size());

    const std::size_t pick = argmin(fc);
    if (!(fc[pick] < res.best_fitness)) {
      res.history.push_back({it, res.best_fitness, res.evals});
      break;
    }
    res.best = candidates[pick];
    res.best_fitness = fc[pick];
    res.history.push_back({it, res.best_fitness, res.evals});
  }
  return res;
}

double fitness(std::span<const double> theta, const Scenario& scenario, const NetSpec& spec) {
  NetParams params{spec.layout.input_dim(), spec.hidden_dim, {theta.begin(), theta.end()}};
  const Controller ctl = Controller::neural(std::move(params), spec.layout);
  SimOptions opt;
  opt.record_households = false;
  opt.record_raw = false;
  const SimResult sim = run(scenario, ctl, opt);
  const auto from = static_cast<std::size_t>(scenario.grid.warmup_steps());
  const std::size_t T = sim.total_kw.size();
  if (T <= from) throw ContractError("scenario shorter than the warm-up day");
  double mean = 0.0;
  for (std::size_t t = from; t < T; ++t) mean += sim.total_kw[t];
  mean /= static_cast<double>(T - from);
  double acc = 0.0;
  for (std::size_t t = from; t < T; ++t) acc += (sim.total_kw[t] - mean) * (sim.total_kw[t] - mean);
  return std::sqrt(acc / static_cast<double>(T - from));
}

std::vector<double> random_start(const NetSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<double> theta(spec.theta_size());
  for (double& v : theta) v = normal(rng);
  return theta;
}

namespace {

DirectResult to_direct(const NetSpec& spec, OptimizeResult r) {
  DirectResult d;
  d.params = NetParams{spec.layout.input_dim(), spec.hidden_dim, std::move(r.best)};
  d.fitness = r.best_fitness;
  d.evals = r.evals;
  d.history = std::move(r.history);
  return d;
}

}  // namespace

DirectResult cma_optimize(const Scenario& scenario, const NetSpec& spec, const CmaConfig& config) {
  Objective f = [&](std::span<const double> theta) { return fitness(theta, scenario, spec); };
  // The start mean and the sampling stream use distinct seeds.
  return to_direct(spec, cma_es(f, random_start(spec, config.seed), CmaConfig{config.population, config.generations, config.sigma, config.seed + 0x5151, config.max_restarts}));
}

DirectResult gd_optimize(const Scenario& scenario, const NetSpec& spec, const GdConfig& config) {
  Objective f = [&](std::span<const double> theta) { return fitness(theta, scenario, spec); };
  return to_direct(spec, numerical_gd(f, random_start(spec, config.seed), config));
}

void save_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path) {
  std::string out = "iteration,best_fitness,evals\n";
  for (const auto& h : history) out += fmt::format("{},{},{}\n", h.iteration, h.best_fitness, h.evals);
  write_text_file(path, out);
}

}  // namespace evcharge
