#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "chanprune/autodiff.hpp"
#include "chanprune/dataio.hpp"
#include "chanprune/netgraph.hpp"
#include "chanprune/ops.hpp"

namespace testutil {

using namespace chanprune;

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(nd(gen));
  return t;
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Builds a scalar loss from leaves; called repeatedly with perturbed inputs.
using LossBuilder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Largest relative error between backward and central differences over
/// all entries of all inputs (or `max_per_input` evenly spaced entries).
inline double fd_check(const std::vector<Tensor<double>>& inputs, const LossBuilder& build,
                       std::size_t max_per_input = 0) {
  Tape<double> tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(build(tape, leaves));
  auto loss_at = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t;
    std::vector<Var> ls;
    for (const auto& x : xs) ls.push_back(t.leaf(x, false));
    return t.value(build(t, ls))[0];
  };
  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto grad = tape.grad(leaves[k]);
    const std::size_t n = inputs[k].size();
    const std::size_t step = max_per_input && n > max_per_input ? n / max_per_input : 1;
    for (std::size_t i = 0; i < n; i += step) {
      const double theta = inputs[k][i];
      const double h = 1e-4 * std::max(1.0, std::abs(theta));
      probe[k][i] = theta + h;
      const double up = loss_at(probe);
      probe[k][i] = theta - h;
      const double down = loss_at(probe);
      probe[k][i] = theta;
      worst = std::max(worst, rel_error(grad[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

/// sum(x * R) for a fixed random R, so every output entry matters.
inline Var project(Tape<double>& tape, Var x, std::uint64_t seed = 99) {
  const Tensor<double> r = random_tensor(tape.value(x).shape(), seed);
  return ops::sum(tape, ops::mul(tape, x, tape.constant(r)));
}

template <typename T>
Batch<T> random_batch(const ActivationShape& in, std::size_t n, std::size_t classes, std::uint64_t seed) {
  Batch<T> b;
  b.images = random_tensor<T>({n, in.channels, in.height, in.width}, seed);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % classes));
  return b;
}

/// Small conv net with a prunable linear hidden layer; 8x8 inputs.
template <typename T>
ModelGraph<T> tiny_net(std::uint64_t seed, std::size_t width = 4, std::size_t classes = 3) {
  auto m = build_small_cnn<T>(classes, 2, 8, width);
  he_init(m, seed);
  return m;
}

/// Perturbs batchnorm affine parameters and running stats away from their
/// init values so eval-mode batchnorm is not the identity in tests.
template <typename T>
void randomize_batchnorm(ModelGraph<T>& m, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5), v(-0.3, 0.3);
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (m.layer(i).kind != LayerKind::BatchNorm) continue;
    auto& p = m.params()[i];
    for (T& x : p.gamma.data()) x = static_cast<T>(u(gen));
    for (T& x : p.beta.data()) x = static_cast<T>(v(gen));
    for (T& x : p.running_mean) x = static_cast<T>(v(gen));
    for (T& x : p.running_var) x = static_cast<T>(u(gen));
  }
}

}  // namespace testutil
