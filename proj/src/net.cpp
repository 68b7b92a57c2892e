#include "evcharge/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "evcharge/error.hpp"
#include "evcharge/io.hpp"
#include "json.hpp"

namespace evcharge {

namespace {

constexpr std::size_t kChunkRows = 32;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Views into theta.
struct Layers {
  const double* w1;
  const double* b1;
  const double* w2;
  double b2;
};

Layers layers(const NetParams& p) {
  const std::size_t h = static_cast<std::size_t>(p.hidden_dim);
  const std::size_t in = static_cast<std::size_t>(p.input_dim);
  const double* base = p.theta.data();
  return {base, base + h * in, base + h * in + h, base[h * in + 2 * h]};
}

void check_shapes(const NetParams& p, std::size_t feature_count, std::size_t rows) {
  if (p.theta.size() != NetParams::size_for(p.input_dim, p.hidden_dim))
    throw StructuralError("theta length does not match the network shape");
  if (feature_count != rows * static_cast<std::size_t>(p.input_dim))
    throw StructuralError(fmt::format("feature matrix of {} values is not {} rows of width {}",
                                      feature_count, rows, p.input_dim));
}

// Output for one row; fills the hidden pre-activations.
double forward_row(const NetParams& p, const Layers& L, const double* f, double* pre) {
  const int h = p.hidden_dim, in = p.input_dim;
  double z = L.b2;
  for (int j = 0; j < h; ++j) {
    const double* w = L.w1 + static_cast<std::size_t>(j) * in;
    double a = L.b1[j];
    for (int k = 0; k < in; ++k) a += w[k] * f[k];
    pre[j] = a;
    if (a > 0.0) z += L.w2[j] * a;
  }
  return sigmoid(z);
}

// Adds the unscaled squared-error gradient of one row into grad.
void accumulate_row(const NetParams& p, const Layers& L, const double* f, double target,
                    double* pre, double* grad) {
  const int h = p.hidden_dim, in = p.input_dim;
  const double o = forward_row(p, L, f, pre);
  const double delta = 2.0 * (o - target) * o * (1.0 - o);
  const std::size_t off_b1 = static_cast<std::size_t>(h) * in;
  const std::size_t off_w2 = off_b1 + h;
  const std::size_t off_b2 = off_w2 + h;
  for (int j = 0; j < h; ++j) {
    if (pre[j] <= 0.0) continue;  // relu inactive, subgradient 0 at the kink
    grad[off_w2 + j] += delta * pre[j];
    const double dh = delta * L.w2[j];
    double* gw = grad + static_cast<std::size_t>(j) * in;
    for (int k = 0; k < in; ++k) gw[k] += dh * f[k];
    grad[off_b1 + j] += dh;
  }
  grad[off_b2] += delta;
}

}  // namespace

NetParams NetParams::zeros(int input_dim, int hidden_dim) {
  NetParams p{input_dim, hidden_dim, std::vector<double>(size_for(input_dim, hidden_dim), 0.0)};
  p.validate();
  return p;
}

void NetParams::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw StructuralError("network dimensions must be positive");
  if (theta.size() != size_for(input_dim, hidden_dim))
    throw StructuralError(fmt::format("theta has {} values, expected {}", theta.size(),
                                      size_for(input_dim, hidden_dim)));
  for (double v : theta)
    if (!std::isfinite(v)) throw StructuralError("theta contains a non-finite value");
}

NetParams init_params(int input_dim, int hidden_dim, std::uint64_t seed) {
  NetParams p = NetParams::zeros(input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  const double a1 = std::sqrt(6.0 / (input_dim + hidden_dim));
  const double a2 = std::sqrt(6.0 / (hidden_dim + 1));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  const std::size_t n_w1 = static_cast<std::size_t>(hidden_dim) * input_dim;
  for (std::size_t i = 0; i < n_w1; ++i) p.theta[i] = u1(rng);
  for (int j = 0; j < hidden_dim; ++j) p.theta[n_w1 + hidden_dim + j] = u2(rng);
  return p;
}

double forward(const NetParams& params, std::span<const double> features) {
  if (static_cast<int>(features.size()) != params.input_dim)
    throw StructuralError(fmt::format("expected {} features, got {}", params.input_dim,
                                      features.size()));
  check_shapes(params, features.size(), 1);
  std::vector<double> pre(static_cast<std::size_t>(params.hidden_dim));
  return forward_row(params, layers(params), features.data(), pre.data());
}

double mse(const NetParams& params, std::span<const double> features,
           std::span<const double> targets) {
  check_shapes(params, features.size(), targets.size());
  if (targets.empty()) return 0.0;
  const Layers L = layers(params);
  const std::size_t in = static_cast<std::size_t>(params.input_dim);
  std::vector<double> pre(static_cast<std::size_t>(params.hidden_dim));
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = forward_row(params, L, features.data() + i * in, pre.data()) - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(targets.size());
}

std::vector<double> grad_mse(const NetParams& params, std::span<const double> features,
                             std::span<const double> targets) {
  check_shapes(params, features.size(), targets.size());
  const std::size_t n = targets.size();
  const std::size_t dim = params.theta.size();
  std::vector<double> grad(dim, 0.0);
  if (n == 0) return grad;
  const Layers L = layers(params);
  const std::size_t in = static_cast<std::size_t>(params.input_dim);
  const std::size_t n_chunks = (n + kChunkRows - 1) / kChunkRows;
  std::vector<double> partial(n_chunks * dim, 0.0);

#pragma omp parallel if (n_chunks > 4)
  {
    std::vector<double> pre(static_cast<std::size_t>(params.hidden_dim));
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
      const std::size_t begin = static_cast<std::size_t>(c) * kChunkRows;
      const std::size_t end = std::min(n, begin + kChunkRows);
      double* g = partial.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t i = begin; i < end; ++i)
        accumulate_row(params, L, features.data() + i * in, targets[i], pre.data(), g);
    }
  }
  for (std::size_t c = 0; c < n_chunks; ++c)
    for (std::size_t k = 0; k < dim; ++k) grad[k] += partial[c * dim + k];
  const double scale = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= scale;
  return grad;
}

namespace reference {

std::vector<double> grad_mse(const NetParams& params, std::span<const double> features,
                             std::span<const double> targets) {
  check_shapes(params, features.size(), targets.size());
  std::vector<double> grad(params.theta.size(), 0.0);
  if (targets.empty()) return grad;
  const Layers L = layers(params);
  const std::size_t in = static_cast<std::size_t>(params.input_dim);
  std::vector<double> pre(static_cast<std::size_t>(params.hidden_dim));
  for (std::size_t i = 0; i < targets.size(); ++i)
    accumulate_row(params, L, features.data() + i * in, targets[i], pre.data(), grad.data());
  const double scale = 1.0 / static_cast<double>(targets.size());
  for (double& g : grad) g *= scale;
  return grad;
}

}  // namespace reference

AdamState AdamState::for_size(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::vector<double>& theta, AdamState& state, std::span<const double> gradient) {
  if (state.m.size() != theta.size() || state.v.size() != theta.size() ||
      gradient.size() != theta.size())
    throw StructuralError("adam state, parameters and gradient differ in length");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * gradient[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * gradient[i] * gradient[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void save_model(const NetParams& params, const std::filesystem::path& path) {
  params.validate();
  nlohmann::json doc{{"input_dim", params.input_dim},
                     {"hidden_dim", params.hidden_dim},
                     {"theta", params.theta}};
  write_text_file(path, doc.dump() + "\n");
}

NetParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model " + path.string());
  NetParams p;
  try {
    const auto doc = nlohmann::json::parse(in);
    p.input_dim = doc.at("input_dim").get<int>();
    p.hidden_dim = doc.at("hidden_dim").get<int>();
    p.theta = doc.at("theta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

}  // namespace evcharge
