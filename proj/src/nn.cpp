#include "thrifty/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace thrifty::nn {

namespace {

// Bounded heads stay strictly inside their open ranges even when the logit
// saturates in double precision.
constexpr double kOpenMargin = 1e-15;

void apply_activation(Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::tanh:
      z = z.array().tanh().cwiseMax(-1.0 + kOpenMargin).cwiseMin(1.0 - kOpenMargin);
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) {
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
        return std::clamp(s, kOpenMargin, 1.0 - kOpenMargin);
      });
      break;
    case Activation::identity:
      break;
  }
}

// Multiplies `delta` in place by the activation derivative, expressed in
// terms of the activation output.
void scale_by_derivative(Matrix& delta, const Matrix& out, Activation a) {
  switch (a) {
    case Activation::relu:
      delta.array() *= (out.array() > 0.0).cast<double>();
      break;
    case Activation::tanh:
      delta.array() *= 1.0 - out.array().square();
      break;
    case Activation::sigmoid:
      delta.array() *= out.array() * (1.0 - out.array());
      break;
    case Activation::identity:
      break;
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  for (const auto& layer : net.layers()) {
    g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    g.biases.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weights.size() != weights.size()) {
    throw std::invalid_argument("gradient shape mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
  return *this;
}

Gradients& Gradients::operator*=(double scale) {
  for (auto& w : weights) w *= scale;
  for (auto& b : biases) b *= scale;
  return *this;
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights) {
    if (w.size() > 0) m = std::max(m, w.cwiseAbs().maxCoeff());
  }
  for (const auto& b : biases) {
    if (b.size() > 0) m = std::max(m, b.cwiseAbs().maxCoeff());
  }
  return m;
}

Mlp::Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output,
         std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  if (layer_sizes_.size() < 2) {
    throw std::invalid_argument("an MLP needs at least an input and an output size");
  }
  for (int s : layer_sizes_) {
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int fan_in = layer_sizes_[l];
    const int fan_out = layer_sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) = dist(rng);
      }
    }
    layer.bias = Vector::Zero(fan_out);
    layers_.push_back(std::move(layer));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return n;
}

Activation Mlp::activation_for(std::size_t layer) const {
  return layer + 1 == layers_.size() ? output_ : hidden_;
}

void Mlp::check_input_rows(Eigen::Index rows) const {
  if (layers_.empty()) throw std::logic_error("MLP is not initialized");
  if (rows != input_dim()) {
    throw std::invalid_argument("input dimension " + std::to_string(rows) +
                                " does not match network input " +
                                std::to_string(input_dim()));
  }
}

Vector Mlp::forward(const Vector& x) const {
  Matrix out = forward_batch(x);
  return out.col(0);
}

Matrix Mlp::forward_batch(const Matrix& inputs) const {
  check_input_rows(inputs.rows());
  Matrix a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    apply_activation(z, activation_for(l));
    a = std::move(z);
  }
  return a;
}

Gradients Mlp::backward(const Vector& x, const Vector& upstream) const {
  return backward_batch(x, upstream);
}

Mlp::ForwardCache Mlp::forward_cached(const Matrix& inputs) const {
  check_input_rows(inputs.rows());
  ForwardCache cache;
  cache.activations.reserve(layers_.size() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * cache.activations.back();
    z.colwise() += layers_[l].bias;
    apply_activation(z, activation_for(l));
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

Gradients Mlp::backward_batch(const Matrix& inputs, const Matrix& upstream) const {
  return backward_cached(forward_cached(inputs), upstream);
}

Gradients Mlp::backward_cached(const ForwardCache& cache, const Matrix& upstream) const {
  const auto& activations = cache.activations;
  if (activations.size() != layers_.size() + 1) {
    throw std::invalid_argument("forward cache does not belong to this network");
  }
  if (upstream.rows() != output_dim() || upstream.cols() != activations.front().cols()) {
    throw std::invalid_argument("upstream gradient shape does not match output");
  }
  Gradients grads;
  grads.weights.resize(layers_.size());
  grads.biases.resize(layers_.size());
  Matrix delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    scale_by_derivative(delta, activations[l + 1], activation_for(l));
    grads.weights[l].noalias() = delta * activations[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix next = layers_[l].weights.transpose() * delta;
      delta = std::move(next);
    }
  }
  return grads;
}

void Mlp::for_each_parameter(const std::function<void(double&)>& fn) {
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) fn(layer.weights.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i]);
  }
}

bool Mlp::operator==(const Mlp& other) const {
  if (layer_sizes_ != other.layer_sizes_ || hidden_ != other.hidden_ ||
      output_ != other.output_) {
    return false;
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights != other.layers_[l].weights ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

AdamState::AdamState(const Mlp& net, AdamConfig config)
    : config_(config), m_(Gradients::zeros_like(net)), v_(Gradients::zeros_like(net)) {}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state,
               double learning_rate) {
  auto& layers = net.layers();
  if (grads.weights.size() != layers.size() || state.m_.weights.size() != layers.size()) {
    throw std::invalid_argument("Adam: parameter/gradient/state shapes differ");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weights[l].rows() != layers[l].weights.rows() ||
        grads.weights[l].cols() != layers[l].weights.cols() ||
        grads.biases[l].size() != layers[l].bias.size()) {
      throw std::invalid_argument("Adam: gradient shape mismatch at layer " +
                                  std::to_string(l));
    }
  }
  const auto& c = state.config_;
  ++state.step_count_;
  const double t = static_cast<double>(state.step_count_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, grads.weights[l], state.m_.weights[l], state.v_.weights[l]);
    update(layers[l].bias, grads.biases[l], state.m_.biases[l], state.v_.biases[l]);
  }
}

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("mse: dimension mismatch");
  }
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double mse(const Vector& pred, const Vector& target) {
  return mse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
             std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
}

Loss mse_loss() {
  return Loss{
      [](const Vector& p, const Vector& t) { return mse(p, t); },
      [](const Vector& p, const Vector& t) -> Vector {
        if (p.size() != t.size()) throw std::invalid_argument("mse: dimension mismatch");
        return 2.0 * (p - t) / static_cast<double>(p.size());
      }};
}

double gradient_check(const Mlp& net, const Vector& x, const Vector& target,
                      const Loss& loss, double step) {
  const Vector pred = net.forward(x);
  const Gradients analytic = net.backward(x, loss.gradient(pred, target));

  std::vector<double> analytic_flat;
  for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
    const auto& w = analytic.weights[l];
    analytic_flat.insert(analytic_flat.end(), w.data(), w.data() + w.size());
    const auto& b = analytic.biases[l];
    analytic_flat.insert(analytic_flat.end(), b.data(), b.data() + b.size());
  }

  Mlp probe = net;
  double worst = 0.0;
  std::size_t index = 0;
  probe.for_each_parameter([&](double& p) {
    const double original = p;
    p = original + step;
    const double plus = loss.value(probe.forward(x), target);
    p = original - step;
    const double minus = loss.value(probe.forward(x), target);
    p = original;
    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic_flat[index++];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  });
  return worst;
}

}  // namespace thrifty::nn
