#include "evcharge/relax_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "evcharge/error.hpp"

namespace evcharge::relax {

namespace {

Problem build(const Scenario& sc, double lambda, std::vector<double> base,
              const std::vector<const ChargingRequest*>& reqs) {
  Problem p;
  p.n_steps = sc.grid.n_steps;
  p.step_hours = sc.grid.step_hours();
  p.lambda = lambda;
  p.base_kw = std::move(base);
  for (const ChargingRequest* r : reqs) {
    p.request_ids.push_back(r->id);
    p.start.push_back(r->start_step);
    p.length.push_back(r->length());
    p.offset.push_back(p.n_vars);
    p.cap.push_back(r->cap_kwh);
    p.budget.push_back(r->energy_kwh);
    p.n_vars += static_cast<std::size_t>(r->length());
  }
  return p;
}

// Coefficient of the normalized-speed difference penalty for one row.
double stab_coeff(const Problem& p, std::size_t r) {
  const int len = p.length[r];
  return len > 1 ? 2.0 / ((len - 1) * p.cap[r] * p.cap[r]) : 0.0;
}

void gradient_row(const Problem& p, std::size_t r, std::span<const double> x,
                  std::span<const double> load_kw, double mean_kw, std::span<double> g) {
  const double c_var = 2.0 / (p.n_steps * p.step_hours);
  const double c_stab = p.lambda * stab_coeff(p, r);
  const auto xr = p.row(x, r);
  auto gr = p.row(g, r);
  const std::size_t len = xr.size();
  const auto t0 = static_cast<std::size_t>(p.start[r]);
  for (std::size_t k = 0; k < len; ++k) {
    double v = c_var * (load_kw[t0 + k] - mean_kw);
    if (c_stab != 0.0) {
      double d = 0.0;
      if (k > 0) d += xr[k] - xr[k - 1];
      if (k + 1 < len) d += xr[k] - xr[k + 1];
      v += c_stab * d;
    }
    gr[k] = v;
  }
}

}  // namespace

Problem make_problem(const Scenario& scenario, double lambda) {
  std::vector<const ChargingRequest*> reqs;
  for (const auto& r : scenario.requests) reqs.push_back(&r);
  return build(scenario, lambda, scenario.baseline_total_kw(), reqs);
}

Problem make_household_problem(const Scenario& scenario, int household_id, double lambda) {
  const int hi = scenario.household_index(household_id);
  if (hi < 0) throw StructuralError(fmt::format("unknown household {}", household_id));
  std::vector<const ChargingRequest*> reqs;
  for (const auto& r : scenario.requests)
    if (r.household_id == household_id) reqs.push_back(&r);
  return build(scenario, lambda, scenario.baseline_kw[static_cast<std::size_t>(hi)], reqs);
}

std::vector<double> flatten(const Problem& p, const Schedule& schedule) {
  std::vector<double> x(p.n_vars, 0.0);
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    auto it = schedule.rows.find(p.request_ids[r]);
    if (it == schedule.rows.end())
      throw StructuralError(fmt::format("schedule lacks request {}", p.request_ids[r]));
    if (it->second.size() != static_cast<std::size_t>(p.length[r]))
      throw StructuralError(fmt::format("schedule row {} has wrong length", p.request_ids[r]));
    std::copy(it->second.begin(), it->second.end(), p.row(std::span<double>(x), r).begin());
  }
  return x;
}

Schedule unflatten(const Problem& p, std::span<const double> x) {
  Schedule s;
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    const auto row = p.row(x, r);
    s.rows[p.request_ids[r]] = std::vector<double>(row.begin(), row.end());
  }
  return s;
}

std::vector<double> uniform_start(const Problem& p) {
  std::vector<double> x(p.n_vars);
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    auto row = p.row(std::span<double>(x), r);
    std::fill(row.begin(), row.end(), p.budget[r] / p.length[r]);
  }
  return x;
}

void accumulate_load(const Problem& p, std::span<const double> x, std::span<double> load_kw) {
  std::copy(p.base_kw.begin(), p.base_kw.end(), load_kw.begin());
  const double inv_dh = 1.0 / p.step_hours;
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    const auto row = p.row(x, r);
    const auto t0 = static_cast<std::size_t>(p.start[r]);
    for (std::size_t k = 0; k < row.size(); ++k) load_kw[t0 + k] += row[k] * inv_dh;
  }
}

double load_variance(std::span<const double> load_kw, double* mean) {
  const double n = static_cast<double>(load_kw.size());
  double m = 0.0;
  for (double v : load_kw) m += v;
  m /= n;
  double acc = 0.0;
  for (double v : load_kw) acc += (v - m) * (v - m);
  if (mean) *mean = m;
  return acc / n;
}

double stabilization(const Problem& p, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t r = 0; r < p.n_requests(); ++r) {
    const int len = p.length[r];
    if (len < 2) continue;
    const auto row = p.row(x, r);
    const double inv_cap = 1.0 / p.cap[r];
    double acc = 0.0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      const double d = (row[k - 1] - row[k]) * inv_cap;
      acc += d * d;
    }
    s += acc / (len - 1);
  }
  return s;
}

void project_row(std::span<const double> v, double budget, double cap, std::span<double> out) {
  const std::size_t n = v.size();
  const double full = static_cast<double>(n) * cap;
  const double slack = 1e-9 * std::max(1.0, full);
  if (budget < -slack || budget > full + slack)
    throw InfeasibleError(fmt::format("budget {} outside [0, {}]", budget, full));
  budget = std::clamp(budget, 0.0, full);
  if (n == 0) return;
  if (budget <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (budget >= full) {
    std::fill(out.begin(), out.end(), cap);
    return;
  }

  auto [vmin_it, vmax_it] = std::minmax_element(v.begin(), v.end());
  double lo = *vmin_it - cap - 1.0;  // every entry clipped to cap
  double hi = *vmax_it + 1.0;        // every entry clipped to 0
  auto clipped_sum = [&](double tau) {
    double s = 0.0;
    for (double vi : v) s += std::clamp(vi - tau, 0.0, cap);
    return s;
  };
  const double tol = 1e-10 * std::max(1.0, budget);
  double tau = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    tau = 0.5 * (lo + hi);
    const double s = clipped_sum(tau);
    if (std::abs(s - budget) <= tol) break;
    if (s > budget)
      lo = tau;
    else
      hi = tau;
    if (hi - lo <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(tau))) break;
  }

  // Solve exactly for the shift on the active pattern found by bisection.
  double free_sum = 0.0;
  int n_free = 0, n_upper = 0;
  for (double vi : v) {
    const double d = vi - tau;
    if (d >= cap)
      ++n_upper;
    else if (d > 0.0) {
      free_sum += vi;
      ++n_free;
    }
  }
  if (n_free > 0) {
    const double exact = (free_sum + n_upper * cap - budget) / n_free;
    if (std::abs(clipped_sum(exact) - budget) <= std::abs(clipped_sum(tau) - budget)) tau = exact;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(v[i] - tau, 0.0, cap);
}

double kkt_row(std::span<const double> x, std::span<const double> g, double cap) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double btol = 1e-10 * std::max(1.0, cap);
  double interior_sum = 0.0;
  int n_interior = 0;
  double max_at_cap = -std::numeric_limits<double>::infinity();
  double min_at_zero = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (x[k] <= btol)
      min_at_zero = std::min(min_at_zero, g[k]);
    else if (x[k] >= cap - btol)
      max_at_cap = std::max(max_at_cap, g[k]);
    else {
      interior_sum += g[k];
      ++n_interior;
    }
  }
  double mu;
  if (n_interior > 0)
    mu = interior_sum / n_interior;
  else if (std::isinf(max_at_cap))
    mu = min_at_zero;
  else if (std::isinf(min_at_zero))
    mu = max_at_cap;
  else
    mu = 0.5 * (max_at_cap + min_at_zero);  // minimizes the larger of the two violations

  // Stationarity: g = mu on free entries, g <= mu at the cap, g >= mu at zero.
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double viol;
    if (x[k] <= btol)
      viol = std::max(0.0, mu - g[k]);
    else if (x[k] >= cap - btol)
      viol = std::max(0.0, g[k] - mu);
    else
      viol = std::abs(g[k] - mu);
    worst = std::max(worst, viol);
  }
  return worst;
}

namespace kernels {

void gradient(const Problem& p, std::span<const double> x, std::span<const double> load_kw,
              double mean_kw, std::span<double> g) {
  const auto n = static_cast<std::ptrdiff_t>(p.n_requests());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    gradient_row(p, static_cast<std::size_t>(r), x, load_kw, mean_kw, g);
}

void project_rows(const Problem& p, std::span<const double> v, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(p.n_requests());
#pragma omp parallel for schedule(dynamic, 8) if (n > 64)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(r);
    project_row(p.row(v, i), p.budget[i], p.cap[i], p.row(out, i));
  }
}

double kkt_residual(const Problem& p, std::span<const double> x, std::span<const double> g) {
  const auto n = static_cast<std::ptrdiff_t>(p.n_requests());
  double worst = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst) if (n > 64)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(r);
    worst = std::max(worst, kkt_row(p.row(x, i), p.row(g, i), p.cap[i]));
  }
  return worst;
}

}  // namespace kernels

namespace reference {

void gradient(const Problem& p, std::span<const double> x, std::span<const double> load_kw,
              double mean_kw, std::span<double> g) {
  for (std::size_t r = 0; r < p.n_requests(); ++r) gradient_row(p, r, x, load_kw, mean_kw, g);
}

void project_rows(const Problem& p, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < p.n_requests(); ++r)
    project_row(p.row(v, r), p.budget[r], p.cap[r], p.row(out, r));
}

double kkt_residual(const Problem& p, std::span<const double> x, std::span<const double> g) {
  double worst = 0.0;
  for (std::size_t r = 0; r < p.n_requests(); ++r)
    worst = std::max(worst, kkt_row(p.row(x, r), p.row(g, r), p.cap[r]));
  return worst;
}

}  // namespace reference

}  // namespace evcharge::relax
