#include "msfcn/network.hpp"

#include <cmath>
#include <random>

#include "msfcn/error.hpp"

namespace msfcn::net {

using nn::Conv2d;
using nn::Crop;
using nn::Deconv2d;
using nn::Dropout;
using nn::FillMode;
using nn::MaxPool2d;
using nn::Relu;
using nn::WeightedSum;

namespace {

constexpr int kMaxBlocks = 3;

std::string expected_skip(int block_index) {
  return block_index == 0 ? std::string() : "pool" + std::to_string(5 - block_index);
}

}  // namespace

void MsfcnConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(Errc::invalid_config, msg); };
  if (backbone.widths.size() != 5 || backbone.convs_per_stage.size() != 5) {
    fail("backbone needs exactly 5 stages (total stride 32)");
  }
  for (std::size_t i = 0; i < 5; ++i) {
    if (backbone.widths[i] < 1 || backbone.convs_per_stage[i] < 1) fail("stage widths and conv counts must be >= 1");
  }
  if (backbone.fc_width < 1 || backbone.fc6_kernel < 1 || backbone.fc6_kernel % 2 == 0) {
    fail("fc6 kernel must be odd and fc width positive");
  }
  if (backbone.patch_size < 32 || backbone.patch_size % 32 != 0) fail("patch size must be a positive multiple of 32");
  if (!(backbone.input_std > 0.0)) fail("input_std must be positive");
  if (classes < 2) fail("need at least two classes");
  if (!(dropout_fc6 >= 0.0 && dropout_fc6 < 1.0) || !(dropout_fc7 >= 0.0 && dropout_fc7 < 1.0)) {
    fail("dropout rates must be in [0,1)");
  }
  if (blocks.empty() || blocks.size() > kMaxBlocks) fail("need one to three deconvolutional blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int expected = 32 >> i;
    if (blocks[i].stride != expected) {
      fail("block " + std::to_string(i) + " must have stride " + std::to_string(expected));
    }
    if (blocks[i].skip_source != expected_skip(static_cast<int>(i))) {
      fail("stride-" + std::to_string(expected) + " block must read skip tap '" +
           expected_skip(static_cast<int>(i)) + "'");
    }
    if (!std::isfinite(blocks[i].fusion_weight)) fail("fusion weights must be finite");
  }
}

MsfcnConfig MsfcnConfig::single_stride(MsfcnConfig base) {
  base.blocks = {{32, "", 1.0}};
  return base;
}

std::string block_output(int stride) { return "out" + std::to_string(stride); }

template <typename T>
nn::NetworkGraph<T> build(const MsfcnConfig& config) {
  config.validate();
  nn::NetworkGraph<T> g;
  std::mt19937_64 rng(config.init_seed);
  const auto& bb = config.backbone;

  g.template emplace<WeightedSum<T>>("scale", {"data"}, std::vector<double>{1.0 / bb.input_std});
  std::string prev = "scale";
  int channels = 3;
  for (int s = 1; s <= 5; ++s) {
    const int width = bb.widths[s - 1];
    for (int i = 1; i <= bb.convs_per_stage[s - 1]; ++i) {
      const std::string suffix = std::to_string(s) + "_" + std::to_string(i);
      auto& conv = g.template emplace<Conv2d<T>>("conv" + suffix, {prev}, channels, width, 3, 1, 1);
      conv.init(FillMode::he_normal, rng);
      g.template emplace<Relu<T>>("relu" + suffix, {"conv" + suffix});
      prev = "relu" + suffix;
      channels = width;
    }
    g.template emplace<MaxPool2d<T>>("pool" + std::to_string(s), {prev}, 2, 2);
    prev = "pool" + std::to_string(s);
  }

  g.template emplace<Conv2d<T>>("fc6", {prev}, channels, bb.fc_width, bb.fc6_kernel, 1, bb.fc6_kernel / 2)
      .init(FillMode::he_normal, rng);
  g.template emplace<Relu<T>>("relu6", {"fc6"});
  g.template emplace<Dropout<T>>("drop6", {"relu6"}, config.dropout_fc6);
  g.template emplace<Conv2d<T>>("fc7", {"drop6"}, bb.fc_width, bb.fc_width, 1, 1, 0)
      .init(FillMode::he_normal, rng);
  g.template emplace<Relu<T>>("relu7", {"fc7"});
  g.template emplace<Dropout<T>>("drop7", {"relu7"}, config.dropout_fc7);
  g.template emplace<Conv2d<T>>("score_fr", {"drop7"}, bb.fc_width, config.classes, 1, 1, 0)
      .init(FillMode::zeros, rng);

  const int k = config.classes;
  std::vector<std::string> outputs;
  std::vector<double> weights;
  std::string pre_deconv = "score_fr";
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const auto& block = config.blocks[i];
    const std::string tag = std::to_string(block.stride);
    if (i > 0) {
      // Previous block's pre-deconvolution scores, upsampled x2, fused with the skip tap.
      auto& up2 = g.template emplace<Deconv2d<T>>("up2_" + tag, {pre_deconv}, k, k, 4, 2);
      up2.init(FillMode::bilinear, rng);
      up2.set_frozen(!config.learn_upsampling);
      const int tap_stage = 5 - static_cast<int>(i);
      g.template emplace<Conv2d<T>>("score_" + block.skip_source, {block.skip_source},
                                    bb.widths[tap_stage - 1], k, 1, 1, 0)
          .init(FillMode::zeros, rng);
      g.template emplace<Crop<T>>("crop2_" + tag, {"up2_" + tag, "score_" + block.skip_source}, 1, 1);
      g.template emplace<WeightedSum<T>>("fuse" + tag, {"crop2_" + tag, "score_" + block.skip_source},
                                         std::vector<double>{1.0, 1.0});
      pre_deconv = "fuse" + tag;
    }
    auto& up = g.template emplace<Deconv2d<T>>("up" + tag, {pre_deconv}, k, k, 2 * block.stride, block.stride);
    up.init(FillMode::bilinear, rng);
    up.set_frozen(!config.learn_upsampling);
    g.template emplace<Crop<T>>(block_output(block.stride), {"up" + tag, "data"}, block.stride / 2,
                                block.stride / 2);
    outputs.push_back(block_output(block.stride));
    weights.push_back(block.fusion_weight);
  }
  g.template emplace<WeightedSum<T>>(kOutputBlob, outputs, weights);
  g.set_output(kOutputBlob);
  return g;
}

template <typename T>
void copy_shared_parameters(nn::NetworkGraph<T>& src, nn::NetworkGraph<T>& dst) {
  for (auto* p : dst.parameters()) {
    auto* q = src.find_parameter(p->name);
    if (q == nullptr) throw Error(Errc::checkpoint_mismatch, "source graph lacks " + p->name);
    if (q->value.shape() != p->value.shape()) throw Error(Errc::checkpoint_mismatch, "shape differs for " + p->name);
    p->value = q->value;
  }
}

template nn::NetworkGraph<float> build<float>(const MsfcnConfig&);
template nn::NetworkGraph<double> build<double>(const MsfcnConfig&);
template void copy_shared_parameters<float>(nn::NetworkGraph<float>&, nn::NetworkGraph<float>&);
template void copy_shared_parameters<double>(nn::NetworkGraph<double>&, nn::NetworkGraph<double>&);

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const MsfcnConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks) {
    blocks.push_back({{"stride", b.stride}, {"skip_source", b.skip_source}, {"fusion_weight", b.fusion_weight}});
  }
  j = {{"backbone",
        {{"widths", c.backbone.widths},
         {"convs_per_stage", c.backbone.convs_per_stage},
         {"fc_width", c.backbone.fc_width},
         {"fc6_kernel", c.backbone.fc6_kernel},
         {"patch_size", c.backbone.patch_size},
         {"input_std", c.backbone.input_std}}},
       {"blocks", blocks},
       {"classes", c.classes},
       {"dropout_fc6", c.dropout_fc6},
       {"dropout_fc7", c.dropout_fc7},
       {"learn_upsampling", c.learn_upsampling},
       {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, MsfcnConfig& c) {
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    c.backbone.widths = b.value("widths", c.backbone.widths);
    c.backbone.convs_per_stage = b.value("convs_per_stage", c.backbone.convs_per_stage);
    c.backbone.fc_width = b.value("fc_width", c.backbone.fc_width);
    c.backbone.fc6_kernel = b.value("fc6_kernel", c.backbone.fc6_kernel);
    c.backbone.patch_size = b.value("patch_size", c.backbone.patch_size);
    c.backbone.input_std = b.value("input_std", c.backbone.input_std);
  }
  if (j.contains("blocks")) {
    c.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      DeconvBlockSpec spec;
      spec.stride = b.at("stride").get<int>();
      spec.skip_source = b.value("skip_source", std::string());
      spec.fusion_weight = b.value("fusion_weight", 1.0);
      c.blocks.push_back(spec);
    }
  }
  c.classes = j.value("classes", c.classes);
  c.dropout_fc6 = j.value("dropout_fc6", c.dropout_fc6);
  c.dropout_fc7 = j.value("dropout_fc7", c.dropout_fc7);
  c.learn_upsampling = j.value("learn_upsampling", c.learn_upsampling);
  c.init_seed = j.value("init_seed", c.init_seed);
}

}  // namespace msfcn::net
