#pragma once
// Central finite-difference checks for layers and graphs in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "msfcn/nn/graph.hpp"
#include "msfcn/nn/layers.hpp"
#include "msfcn/random.hpp"

namespace msfcn::testing {

using nn::TensorD;

inline TensorD random_tensor(nn::Shape s, std::mt19937_64& rng, double scale = 1.0) {
  TensorD t(s);
  for (auto& v : t.values()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

inline double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

struct GradCheck {
  double worst = 0.0;  // largest relative error over inputs and parameters
  std::size_t checked = 0;
};

// Checks d(sum(out * probe))/d(inputs, params) for a single layer. `reseed`
// restores any RNG the forward pass consumes so every evaluation matches.
inline GradCheck check_layer(nn::Layer<double>& layer, std::vector<TensorD> inputs, const nn::RunContext& ctx,
                             std::mt19937_64& rng, const std::function<void()>& reseed = {},
                             double h = 1e-6) {
  auto run = [&]() {
    if (reseed) reseed();
    std::vector<const TensorD*> in;
    for (auto& t : inputs) in.push_back(&t);
    return layer.forward(in, ctx);
  };
  const TensorD out = run();
  const TensorD probe = random_tensor(out.shape(), rng);

  std::vector<TensorD> grads;
  for (auto& t : inputs) grads.emplace_back(t.shape());
  for (auto& p : layer.parameters()) p.grad.reset(p.value.shape());
  {
    run();
    std::vector<const TensorD*> in;
    for (auto& t : inputs) in.push_back(&t);
    std::vector<TensorD*> gin;
    for (auto& g : grads) gin.push_back(&g);
    layer.backward(in, probe, gin);
  }

  GradCheck result;
  auto numeric_for = [&](TensorD& target, const TensorD& analytic) {
    std::vector<double> a(analytic.values().begin(), analytic.values().end());
    std::vector<double> num(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double keep = target[i];
      target[i] = keep + h;
      const double up = dot(run(), probe);
      target[i] = keep - h;
      const double down = dot(run(), probe);
      target[i] = keep;
      num[i] = (up - down) / (2.0 * h);
    }
    result.worst = std::max(result.worst, relative_error(a, num));
    result.checked += target.size();
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) numeric_for(inputs[k], grads[k]);
  for (auto& p : layer.parameters()) {
    const TensorD analytic = p.grad;
    numeric_for(p.value, analytic);
  }
  return result;
}

}  // namespace msfcn::testing
