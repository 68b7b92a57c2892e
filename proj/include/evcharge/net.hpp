#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace evcharge {

/// One-hidden-layer perceptron: sigmoid(w2 . relu(W1 f + b1) + b2).
///
/// theta layout: W1 row-major (hidden x input), b1 (hidden), w2 (hidden),
/// b2 (1). This flat vector is the only representation of a controller; the
/// imitation trainer and the direct optimizers all produce it.
struct NetParams {
  int input_dim = 0;
  int hidden_dim = 0;
  std::vector<double> theta;

  static std::size_t size_for(int input_dim, int hidden_dim) {
    return static_cast<std::size_t>(hidden_dim) * (input_dim + 1) + hidden_dim + 1;
  }
  /// Zero parameters of the right length.
  static NetParams zeros(int input_dim, int hidden_dim);

  void validate() const;  // throws StructuralError
  bool operator==(const NetParams&) const = default;
};

/// Glorot-uniform weights, zero biases.
NetParams init_params(int input_dim, int hidden_dim, std::uint64_t seed);

double forward(const NetParams& params, std::span<const double> features);

/// Mean squared error over n rows of a row-major feature matrix.
double mse(const NetParams& params, std::span<const double> features,
           std::span<const double> targets);

/// Gradient of mse(...) with respect to theta. Rows are split into fixed
/// chunks whose partial sums are reduced in chunk order, so the result does not
/// depend on the number of threads.
std::vector<double> grad_mse(const NetParams& params, std::span<const double> features,
                             std::span<const double> targets);

namespace reference {
/// Row-by-row serial accumulation of the same gradient.
std::vector<double> grad_mse(const NetParams& params, std::span<const double> features,
                             std::span<const double> targets);
}  // namespace reference

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(std::size_t n, double lr = 1e-3);
};

/// Bias-corrected Adam update of theta in place.
void adam_step(std::vector<double>& theta, AdamState& state, std::span<const double> gradient);

/// {"input_dim", "hidden_dim", "theta"}; doubles are written in shortest
/// round-trip form so a reload is bit-identical.
void save_model(const NetParams& params, const std::filesystem::path& path);
NetParams load_model(const std::filesystem::path& path);

}  // namespace evcharge
