#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bfg/autograd.hpp"
#include "bfg/dataset.hpp"
#include "bfg/prototype.hpp"

namespace testing {

using bfg::ag::Shape;
using bfg::ag::Tensor;

inline std::vector<double> uniform_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Tensor random_param(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(s, uniform_values(s.size(), rng, lo, hi));
}

// Largest relative error between analytic gradients of `loss_fn` and central
// differences, over every entry of every listed leaf.
inline double max_grad_error(const std::vector<Tensor>& leaves, const std::function<Tensor()>& loss_fn,
                             double h = 1e-6) {
  for (auto leaf : leaves) leaf.zero_grad();
  bfg::ag::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor leaf = leaves[l];
    auto w = leaf.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = loss_fn().item();
      w[i] = saved - h;
      const double down = loss_fn().item();
      w[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic[l][i]) / std::max(1.0, std::abs(numeric) + std::abs(analytic[l][i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// m masked points with random nonnegative features and coordinates in a unit cube.
inline bfg::MaskedPoints random_masked(std::size_t m, std::size_t d, std::mt19937_64& rng, bool trainable = false) {
  bfg::MaskedPoints mp;
  mp.class_id = 1;
  auto f = uniform_values(m * d, rng, 0.0, 1.0);
  mp.features = trainable ? Tensor::parameter({m, d}, f) : Tensor::constant({m, d}, f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    mp.coords.push_back({u(rng), u(rng), u(rng)});
    mp.indices.push_back(i);
  }
  return mp;
}

// A dataset small enough for episode and trainer tests.
inline bfg::DataConfig tiny_data_config() {
  bfg::DataConfig cfg;
  cfg.seed = 5;
  cfg.scenes = 4;
  cfg.points_per_block = 96;
  cfg.scene.points_per_scene = 6000;
  return cfg;
}

}  // namespace testing
