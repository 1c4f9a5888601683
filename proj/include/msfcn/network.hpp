#pragma once
// Multi-stride FCN: VGG-style backbone, one deconvolutional block per output
// stride (32, 16, 8), weighted fusion of the per-stride score maps.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfcn/nn/graph.hpp"

namespace msfcn::net {

struct BackboneSpec {
  std::vector<int> widths{16, 32, 64, 128, 128};
  std::vector<int> convs_per_stage{2, 2, 2, 2, 2};
  int fc_width = 256;
  int fc6_kernel = 3;
  int patch_size = 128;
  // Expected std of mean-subtracted pixel inputs; the graph divides its input
  // by this so the first convolution sees roughly unit-scale data.
  double input_std = 64.0;
};

struct DeconvBlockSpec {
  int stride = 32;
  std::string skip_source;  // empty for the stride-32 block
  double fusion_weight = 1.0;
};

struct MsfcnConfig {
  BackboneSpec backbone;
  std::vector<DeconvBlockSpec> blocks{{32, "", 0.5}, {16, "pool4", 0.7}, {8, "pool3", 0.9}};
  int classes = 5;
  double dropout_fc6 = 0.9;
  double dropout_fc7 = 0.75;
  bool learn_upsampling = true;
  std::uint64_t init_seed = 0;

  void validate() const;

  // FCN-32s style: just the stride-32 block with unit weight.
  static MsfcnConfig single_stride(MsfcnConfig base);
};

void to_json(nlohmann::json& j, const MsfcnConfig& c);
void from_json(const nlohmann::json& j, MsfcnConfig& c);

// Blob holding the fused score map.
inline constexpr const char* kOutputBlob = "fused";

// Builds and initializes the graph. Parameter names are stable across configs,
// so a stride-32-only graph shares names with the multi-stride one.
template <typename T>
nn::NetworkGraph<T> build(const MsfcnConfig& config);

// Output blob of the block with the given stride ("out32", "out16", ...).
std::string block_output(int stride);

// Copies every parameter `dst` has from `src` by name.
template <typename T>
void copy_shared_parameters(nn::NetworkGraph<T>& src, nn::NetworkGraph<T>& dst);

}  // namespace msfcn::net
