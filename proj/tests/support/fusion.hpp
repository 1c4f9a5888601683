#pragma once
// Multi-stride graph with fusion weights (1, 0, 0) against the stride-32-only
// graph sharing its weights.

#include <random>

#include "msfcn/network.hpp"

namespace msfcn::testing {

template <typename T>
void randomize_parameters(nn::NetworkGraph<T>& g, std::mt19937_64& rng, double scale = 0.05) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto* p : g.parameters())
    for (auto& v : p->value.values()) v = static_cast<T>(dist(rng));
}

// Largest |fused - single| over `inputs` random patches of `size` px.
inline double fusion_degeneracy_gap(int size, int inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  net::MsfcnConfig multi;
  multi.backbone.patch_size = size;
  multi.blocks[0].fusion_weight = 1.0;
  multi.blocks[1].fusion_weight = 0.0;
  multi.blocks[2].fusion_weight = 0.0;
  auto full = net::build<float>(multi);
  // Zero-initialized score layers would make every map trivially zero.
  randomize_parameters(full, rng);
  auto single = net::build<float>(net::MsfcnConfig::single_stride(multi));
  net::copy_shared_parameters(full, single);

  const nn::RunContext infer{nn::Mode::infer, nullptr};
  std::uniform_real_distribution<float> pixel(-128.0f, 128.0f);
  double gap = 0.0;
  for (int i = 0; i < inputs; ++i) {
    nn::Tensor x({1, 3, size, size});
    for (auto& v : x.values()) v = pixel(rng);
    const nn::Tensor a = full.forward(x, infer);
    const nn::Tensor& b = single.forward(x, infer);
    if (a.shape() != b.shape()) return 1e300;
    for (std::size_t j = 0; j < a.size(); ++j) gap = std::max(gap, static_cast<double>(std::abs(a[j] - b[j])));
  }
  return gap;
}

}  // namespace msfcn::testing
