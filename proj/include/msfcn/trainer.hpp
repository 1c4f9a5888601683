#pragma once
// Training and inference drivers for the multi-stride FCN.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfcn/metrics.hpp"
#include "msfcn/network.hpp"
#include "msfcn/nn/checkpoint.hpp"
#include "msfcn/nn/sgd.hpp"
#include "msfcn/patch.hpp"

namespace msfcn::train {

struct EpochLog {
  int epoch = 0;             // 1-based
  long iteration = 0;        // iterations completed so far
  double lr = 0.0;           // rate used by the epoch's last update
  double train_loss = 0.0;   // mean minibatch loss over the epoch
  std::optional<double> val_miou;
};

void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochLog>& curve);

// Patch pairs held in memory, in manifest order.
struct PatchSet {
  std::vector<patch::PatchRecord> records;
  std::vector<RgbRaster> features;
  std::vector<LabelMask> labels;

  std::size_t size() const noexcept { return records.size(); }
};

PatchSet load_patches(const patch::PatchManifest& manifest, Split split);

struct TrainOptions {
  nn::SgdConfig sgd;
  bool validate_each_epoch = true;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> curve;
  long iterations = 0;
  std::string rng_state;  // serialized mt19937_64 after the last update
};

class Trainer {
 public:
  Trainer(net::MsfcnConfig config, patch::MeanImage mean);

  // Copies parameters from a checkpoint; the schedule still starts at iteration 0.
  void warm_start(const nn::CheckpointData& checkpoint);

  // Minibatch SGD over `train` (reshuffled every epoch from the seed); val mIoU
  // is computed on `val` after each epoch when it is non-empty.
  TrainResult fit(const PatchSet& train, const PatchSet& val, const TrainOptions& options);

  // Header: model config, SGD config, iteration count, RNG state, mean image ref.
  void save(const std::filesystem::path& path, const TrainResult& result, const nn::SgdConfig& sgd,
            const nlohmann::json& extra = {});

  nn::NetworkGraph<float>& graph() noexcept { return graph_; }
  const net::MsfcnConfig& config() const noexcept { return config_; }
  const patch::MeanImage& mean() const noexcept { return mean_; }

 private:
  net::MsfcnConfig config_;
  patch::MeanImage mean_;
  nn::NetworkGraph<float> graph_;
};

// Model config stored in a checkpoint header.
net::MsfcnConfig config_from_checkpoint(const nn::CheckpointData& checkpoint);

struct InferenceTiming {
  std::size_t patches = 0;
  double network_seconds = 0.0;  // summed per-patch forward wall time
};

// Read-only model replicated per worker thread.
class Predictor {
 public:
  Predictor(const net::MsfcnConfig& config, const nn::CheckpointData& checkpoint, patch::MeanImage mean);
  Predictor(const net::MsfcnConfig& config, nn::NetworkGraph<float>& trained, patch::MeanImage mean);
  ~Predictor();

  // Class map for one patch-sized raster.
  LabelMask predict_patch(const RgbRaster& patch, int worker = 0, double* seconds = nullptr);

  // Tiles the slide, predicts each tile and stitches. Threads > 1 spread tiles
  // over workers; results do not depend on the thread count.
  LabelMask infer_slide(const RgbRaster& slide, int threads = 1, InferenceTiming* timing = nullptr);

  int patch_size() const noexcept { return config_.backbone.patch_size; }

 private:
  nn::NetworkGraph<float>& replica(int worker);

  net::MsfcnConfig config_;
  patch::MeanImage mean_;
  std::map<std::string, nn::Tensor> weights_;
  std::vector<std::unique_ptr<nn::NetworkGraph<float>>> replicas_;
};

// Pooled confusion matrix of predictions over a patch set.
eval::ConfusionMatrix evaluate_patches(Predictor& predictor, const PatchSet& set);

}  // namespace msfcn::train
