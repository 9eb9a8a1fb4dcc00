#include <doctest.h>

#include <cmath>
#include <random>

#include "thrifty/nn.hpp"

using namespace thrifty::nn;

namespace {

Mlp linear_1x1(double w, double b) {
  Mlp net({1, 1}, Activation::identity, Activation::identity, 0);
  net.layers()[0].weights(0, 0) = w;
  net.layers()[0].bias(0) = b;
  return net;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("mlp init is deterministic per seed") {
  Mlp a({2, 4, 2}, Activation::relu, Activation::identity, 7);
  Mlp b({2, 4, 2}, Activation::relu, Activation::identity, 7);
  Mlp c({2, 4, 2}, Activation::relu, Activation::identity, 8);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.parameter_count() == 2 * 4 + 4 + 4 * 2 + 2);
}

TEST_CASE("mlp rejects a single layer size") {
  CHECK_THROWS_AS(Mlp({2}, Activation::relu, Activation::identity, 0), std::invalid_argument);
}

TEST_CASE("zero weights give the final bias") {
  Mlp net({3, 5, 2}, Activation::tanh, Activation::identity, 1);
  net.for_each_parameter([](double& p) { p = 0.0; });
  net.layers().back().bias = vec({0.25, -1.5});
  const Vector y = net.forward(vec({0.3, -0.7, 2.0}));
  CHECK(y(0) == 0.25);
  CHECK(y(1) == -1.5);
}

TEST_CASE("forward on simple layers") {
  CHECK(linear_1x1(2.0, 0.0).forward(vec({3.0}))(0) == 6.0);

  Mlp sig({1, 1}, Activation::identity, Activation::sigmoid, 0);
  sig.layers()[0].weights(0, 0) = 0.0;
  sig.layers()[0].bias(0) = 0.0;
  CHECK(sig.forward(vec({5.0}))(0) == 0.5);

  Mlp th({1, 1}, Activation::identity, Activation::tanh, 0);
  th.layers()[0].weights(0, 0) = 0.0;
  th.layers()[0].bias(0) = 20.0;
  const double v = th.forward(vec({1.0}))(0);
  CHECK(v > 0.99);
  CHECK(v <= 1.0);
}

TEST_CASE("forward_batch matches per-sample forward") {
  Mlp net({2, 8, 3}, Activation::relu, Activation::tanh, 3);
  Matrix x = Matrix::Random(2, 7);
  const Matrix y = net.forward_batch(x);
  for (int c = 0; c < 7; ++c) {
    CHECK((y.col(c) - net.forward(x.col(c))).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS(net.forward(vec({1.0, 2.0, 3.0})));
}

TEST_CASE("backward on a 1x1 linear map") {
  // L = 0.5 (y - t)^2, y = w x, so dL/dw = (y - t) x.
  const Mlp net = linear_1x1(2.0, 0.0);
  const Vector x = vec({3.0});
  const double y = net.forward(x)(0);
  const Gradients g = net.backward(x, vec({y - 0.0}));
  CHECK(g.weights[0](0, 0) == doctest::Approx(18.0).epsilon(1e-15));
  CHECK(g.biases[0](0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("zero upstream gives zero gradients") {
  Mlp net({2, 6, 6, 2}, Activation::tanh, Activation::sigmoid, 5);
  const Gradients g = net.backward(vec({0.2, -0.4}), Vector::Zero(2));
  CHECK(g.max_abs() == 0.0);
}

TEST_CASE("backward_batch sums per-sample gradients") {
  Mlp net({2, 5, 2}, Activation::relu, Activation::identity, 11);
  Matrix x = Matrix::Random(2, 4);
  Matrix up = Matrix::Random(2, 4);
  Gradients sum = Gradients::zeros_like(net);
  for (int c = 0; c < 4; ++c) sum += net.backward(x.col(c), up.col(c));
  Gradients batch = net.backward_batch(x, up);
  batch *= -1.0;
  batch += sum;
  CHECK(batch.max_abs() < 1e-12);
}

TEST_CASE("analytic gradients agree with central differences") {
  std::mt19937_64 rng(42);
  const Activation acts[] = {Activation::tanh, Activation::sigmoid, Activation::identity};
  for (int trial = 0; trial < 10; ++trial) {
    Mlp net({2, 8, 2}, acts[trial % 3], acts[(trial + 1) % 3], rng());
    Vector x = Vector::Random(2);
    Vector t = Vector::Random(2);
    CHECK(gradient_check(net, x, t, mse_loss()) < 1e-4);
  }
}

TEST_CASE("gradient check on a zeroed linear net") {
  Mlp net({3, 2}, Activation::identity, Activation::identity, 0);
  net.for_each_parameter([](double& p) { p = 0.0; });
  const Vector x = vec({0.5, -1.0, 2.0});
  const Vector t = vec({1.0, -0.5});
  const double e1 = gradient_check(net, x, t, mse_loss());
  CHECK(e1 < 1e-10);
  CHECK(gradient_check(net, x, t, mse_loss()) == e1);
}

TEST_CASE("first adam step moves by the learning rate") {
  Mlp net = linear_1x1(0.0, 0.0);
  AdamState state(net);
  Gradients g = Gradients::zeros_like(net);
  g.weights[0](0, 0) = 1.0;
  adam_step(net, g, state, 0.001);
  // Bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
  CHECK(net.layers()[0].weights(0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(net.layers()[0].bias(0) == 0.0);
  CHECK(state.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters and moments fixed") {
  Mlp net({2, 4, 2}, Activation::relu, Activation::identity, 9);
  const Mlp before = net;
  AdamState state(net);
  adam_step(net, Gradients::zeros_like(net), state, 0.01);
  CHECK(net == before);
}

TEST_CASE("adam is deterministic from cloned state") {
  Mlp a({2, 4, 2}, Activation::relu, Activation::identity, 9);
  AdamState sa(a);
  const Gradients g = a.backward(vec({0.1, 0.2}), vec({1.0, -1.0}));
  adam_step(a, g, sa, 0.01);
  Mlp b = a;
  AdamState sb = sa;
  adam_step(a, g, sa, 0.01);
  adam_step(b, g, sb, 0.01);
  CHECK(a == b);
}

TEST_CASE("mse") {
  CHECK(mse(vec({1.0, 2.0}), vec({1.0, 2.0})) == 0.0);
  CHECK(mse(vec({1.0, 0.0}), vec({0.0, 0.0})) == 0.5);
  CHECK(mse(vec({3.0}), vec({1.0})) == 4.0);
}

TEST_CASE("activation names round trip") {
  for (Activation a : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::identity}) {
    CHECK(activation_from_string(to_string(a)) == a);
  }
  CHECK_THROWS(activation_from_string("softplus"));
}
