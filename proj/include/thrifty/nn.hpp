#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace thrifty::nn {

using Vector = Eigen::VectorXd;
// Batches are stored one sample per column.
using Matrix = Eigen::MatrixXd;

enum class Activation { relu, tanh, sigmoid, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

class Mlp;

/// Parameter-shaped container used for gradients and optimizer moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const Mlp& net);
  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double scale);
  double max_abs() const;
};

/// Fully connected network with a shared hidden activation and a separate
/// output activation. Weights are initialized uniformly in
/// +-sqrt(6 / (fan_in + fan_out)) with zero biases.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output,
      std::uint64_t seed);

  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Layer activations of one batch forward pass, input first.
  struct ForwardCache {
    std::vector<Matrix> activations;
    const Matrix& output() const { return activations.back(); }
  };

  Vector forward(const Vector& x) const;
  Matrix forward_batch(const Matrix& inputs) const;
  ForwardCache forward_cached(const Matrix& inputs) const;

  /// Gradient of dot(output, upstream) with respect to every parameter.
  Gradients backward(const Vector& x, const Vector& upstream) const;
  /// Same as backward, summed over the columns of the batch.
  Gradients backward_batch(const Matrix& inputs, const Matrix& upstream) const;
  Gradients backward_cached(const ForwardCache& cache, const Matrix& upstream) const;

  /// Visits every scalar parameter in a fixed order (layer, weights
  /// column-major, then bias).
  void for_each_parameter(const std::function<void(double&)>& fn);

  bool operator==(const Mlp& other) const;

 private:
  Activation activation_for(std::size_t layer) const;
  void check_input_rows(Eigen::Index rows) const;

  std::vector<int> layer_sizes_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const Mlp& net, AdamConfig config = {});

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

 private:
  friend void adam_step(Mlp& net, const Gradients& grads, AdamState& state,
                        double learning_rate);

  AdamConfig config_;
  Gradients m_;
  Gradients v_;
  std::uint64_t step_count_ = 0;
};

/// Bias-corrected Adam update; increments the state's step count.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state,
               double learning_rate);

/// Mean of squared componentwise differences.
double mse(std::span<const double> pred, std::span<const double> target);
double mse(const Vector& pred, const Vector& target);

struct Loss {
  std::function<double(const Vector& pred, const Vector& target)> value;
  std::function<Vector(const Vector& pred, const Vector& target)> gradient;
};

Loss mse_loss();

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-8), using central differences with the given step.
double gradient_check(const Mlp& net, const Vector& x, const Vector& target,
                      const Loss& loss, double step = 1e-5);

}  // namespace thrifty::nn
