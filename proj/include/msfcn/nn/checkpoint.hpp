#pragma once
// Checkpoint container:
//   "MSFCN1" | u64 LE header length | JSON header | float32 LE blobs
// The header lists {"params": [{"name", "shape"}...]} in blob order plus
// caller-supplied metadata.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "msfcn/nn/graph.hpp"

namespace msfcn::nn {

inline constexpr std::string_view kCheckpointMagic = "MSFCN1";

struct CheckpointData {
  nlohmann::json header;
  std::map<std::string, Tensor> params;
};

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     NetworkGraph<float>& graph);

CheckpointData load_checkpoint(const std::filesystem::path& path);

// Copies every graph parameter from the checkpoint; names and shapes must match.
void apply_checkpoint(const CheckpointData& data, NetworkGraph<float>& graph);

}  // namespace msfcn::nn
