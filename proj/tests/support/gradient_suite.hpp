#pragma once
// Finite-difference sweep over every trainable-path layer, five random shapes each.

#include <string>
#include <utility>
#include <vector>

#include "msfcn/nn/loss.hpp"
#include "support/gradcheck.hpp"

namespace msfcn::testing {

inline int pick(std::mt19937_64& rng, int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); }

// Worst relative error per layer kind.
inline std::vector<std::pair<std::string, double>> gradient_suite(std::uint64_t seed, int shapes = 5) {
  using namespace nn;
  std::mt19937_64 rng(seed);
  const RunContext infer{Mode::infer, nullptr};
  std::vector<std::pair<std::string, double>> out;
  auto record = [&](const std::string& name, double err) {
    for (auto& [n, e] : out) {
      if (n == name) {
        e = std::max(e, err);
        return;
      }
    }
    out.emplace_back(name, err);
  };

  for (int t = 0; t < shapes; ++t) {
    const int k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2);
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, k + 2, 7), pick(rng, k + 2, 7)};
    Conv2d<double> conv(in.c, pick(rng, 1, 3), k, stride, pad);
    conv.init(FillMode::he_normal, rng);
    for (auto& v : conv.bias().value.values()) v = uniform(rng, -0.5, 0.5);
    record("conv", check_layer(conv, {random_tensor(in, rng)}, infer, rng).worst);
  }
  for (int t = 0; t < shapes; ++t) {
    const int s = t % 2 == 0 ? 2 : 4;
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
    Deconv2d<double> deconv(in.c, pick(rng, 1, 3), 2 * s, s);
    deconv.init(t < 2 ? FillMode::bilinear : FillMode::he_normal, rng);
    record("deconv", check_layer(deconv, {random_tensor(in, rng)}, infer, rng).worst);
  }
  for (int t = 0; t < shapes; ++t) {
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 9), pick(rng, 4, 9)};
    const int th = pick(rng, 1, in.h - 1), tw = pick(rng, 1, in.w - 1);
    Crop<double> crop(pick(rng, 0, in.h - th), pick(rng, 0, in.w - tw));
    record("crop",
           check_layer(crop, {random_tensor(in, rng), random_tensor({in.n, 1, th, tw}, rng)}, infer, rng).worst);
  }
  for (int t = 0; t < shapes; ++t) {
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 6), pick(rng, 1, 6)};
    std::vector<double> weights;
    std::vector<TensorD> inputs;
    for (int i = 0, n = pick(rng, 1, 3); i < n; ++i) {
      weights.push_back(uniform(rng, -1.5, 1.5));
      inputs.push_back(random_tensor(in, rng));
    }
    WeightedSum<double> ws(weights);
    record("wsum", check_layer(ws, inputs, infer, rng).worst);
  }
  for (int t = 0; t < shapes; ++t) {
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 6), pick(rng, 2, 6)};
    Dropout<double> drop(0.5);
    record("dropout-off", check_layer(drop, {random_tensor(in, rng)}, infer, rng).worst);
  }
  for (int t = 0; t < shapes; ++t) {
    const Shape s{pick(rng, 1, 2), pick(rng, 2, 5), pick(rng, 1, 5), pick(rng, 1, 5)};
    TensorD scores = random_tensor(s, rng, 3.0);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(s.n) * s.h * s.w);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % s.c);
    const auto res = softmax_multinomial_loss<double>(scores, labels);
    std::vector<double> analytic(res.grad.values().begin(), res.grad.values().end());
    std::vector<double> numeric(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double keep = scores[i];
      scores[i] = keep + 1e-6;
      const double up = softmax_multinomial_loss<double>(scores, labels).loss;
      scores[i] = keep - 1e-6;
      const double down = softmax_multinomial_loss<double>(scores, labels).loss;
      scores[i] = keep;
      numeric[i] = (up - down) / 2e-6;
    }
    record("softmax-loss", relative_error(analytic, numeric));
  }
  return out;
}

}  // namespace msfcn::testing
