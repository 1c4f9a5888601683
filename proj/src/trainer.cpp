#include "msfcn/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "msfcn/error.hpp"
#include "msfcn/nn/loss.hpp"

namespace msfcn::train {
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr nn::RunContext kInfer{nn::Mode::infer, nullptr};

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
}

LabelMask to_mask(const std::vector<std::uint8_t>& classes, int n, int size) {
  LabelMask m(size, size);
  std::copy_n(classes.begin() + static_cast<std::ptrdiff_t>(n) * size * size, static_cast<std::size_t>(size) * size,
              m.labels.begin());
  return m;
}

void check_patch_size(const PatchSet& set, int size, const char* what) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.features[i].width != size || set.features[i].height != size || set.labels[i].width != size ||
        set.labels[i].height != size) {
      throw Error(Errc::shape_mismatch, std::string(what) + " patch " + set.records[i].key() + " is not " +
                                            std::to_string(size) + " px");
    }
  }
}

}  // namespace

void write_loss_curve(const fs::path& path, const std::vector<EpochLog>& curve) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write " + path.string());
  os << "epoch,iteration,lr,train_loss,val_miou\n";
  char line[160];
  for (const auto& e : curve) {
    std::snprintf(line, sizeof line, "%d,%ld,%.9g,%.9g,", e.epoch, e.iteration, e.lr, e.train_loss);
    os << line;
    if (e.val_miou) {
      std::snprintf(line, sizeof line, "%.9g", *e.val_miou);
      os << line;
    }
    os << "\n";
  }
}

PatchSet load_patches(const patch::PatchManifest& manifest, Split split) {
  PatchSet set;
  for (const auto* rec : manifest.in_split(split)) {
    set.records.push_back(*rec);
    set.features.push_back(load_raster(rec->feature_path));
    set.labels.push_back(load_label_mask(rec->label_path));
  }
  return set;
}

Trainer::Trainer(net::MsfcnConfig config, patch::MeanImage mean)
    : config_(std::move(config)), mean_(std::move(mean)), graph_(net::build<float>(config_)) {
  if (mean_.size != config_.backbone.patch_size) {
    throw Error(Errc::shape_mismatch, "mean image is " + std::to_string(mean_.size) + " px, model expects " +
                                          std::to_string(config_.backbone.patch_size));
  }
}

void Trainer::warm_start(const nn::CheckpointData& checkpoint) { nn::apply_checkpoint(checkpoint, graph_); }

TrainResult Trainer::fit(const PatchSet& train, const PatchSet& val, const TrainOptions& options) {
  options.sgd.validate();
  const int size = config_.backbone.patch_size;
  check_patch_size(train, size, "training");
  check_patch_size(val, size, "validation");
  if (train.size() == 0 && options.sgd.epochs > 0) throw Error(Errc::empty_training_set, "no training patches");

  const int batch = options.sgd.minibatch;
  const long per_epoch = static_cast<long>((train.size() + batch - 1) / batch);
  const long total = per_epoch * options.sgd.epochs;
  std::mt19937_64 rng(options.sgd.seed);
  nn::SgdOptimizer<float> sgd(options.sgd);
  const nn::RunContext ctx{nn::Mode::train, &rng};
  const auto params = graph_.parameters();

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::vector<std::uint8_t> labels;
  long t = 0;
  for (int epoch = 1; epoch <= options.sgd.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    double loss_sum = 0.0;
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const int n = static_cast<int>(std::min<std::size_t>(batch, order.size() - start));
      nn::Tensor input({n, 3, size, size});
      labels.resize(static_cast<std::size_t>(n) * size * size);
      for (int b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        patch::normalize_into(train.features[idx], mean_, input, b);
        std::copy(train.labels[idx].labels.begin(), train.labels[idx].labels.end(),
                  labels.begin() + static_cast<std::ptrdiff_t>(b) * size * size);
      }
      graph_.zero_grad();
      const nn::Tensor& scores = graph_.forward(input, ctx);
      const auto loss = nn::softmax_multinomial_loss<float>(scores, labels);
      if (!std::isfinite(loss.loss)) {
        throw Error(Errc::numeric, "training loss diverged at iteration " + std::to_string(t));
      }
      graph_.backward(loss.grad);
      sgd.step(params, t, total);
      log.lr = nn::learning_rate(options.sgd, t, total);
      loss_sum += loss.loss;
      ++t;
    }
    log.iteration = t;
    log.train_loss = per_epoch > 0 ? loss_sum / static_cast<double>(per_epoch) : 0.0;
    if (options.validate_each_epoch && val.size() > 0) {
      eval::ConfusionMatrix cm(config_.classes);
      for (std::size_t i = 0; i < val.size(); ++i) {
        const nn::Tensor x = patch::normalize<float>(val.features[i], mean_);
        const auto classes = nn::argmax_channels(graph_.forward(x, kInfer));
        cm.accumulate(val.labels[i], to_mask(classes, 0, size));
      }
      log.val_miou = eval::metrics(cm).miou;
    }
    result.curve.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }
  for (auto* p : params) {
    if (!p->value.all_finite()) throw Error(Errc::numeric, "parameter " + p->name + " is not finite");
  }
  result.iterations = t;
  std::ostringstream state;
  state << rng;
  result.rng_state = state.str();
  return result;
}

void Trainer::save(const fs::path& path, const TrainResult& result, const nn::SgdConfig& sgd,
                   const nlohmann::json& extra) {
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["model"] = config_;
  header["sgd"] = sgd;
  header["iteration"] = result.iterations;
  header["rng_state"] = result.rng_state;
  nn::save_checkpoint(path, std::move(header), graph_);
}

net::MsfcnConfig config_from_checkpoint(const nn::CheckpointData& checkpoint) {
  if (!checkpoint.header.contains("model")) {
    throw Error(Errc::checkpoint_mismatch, "checkpoint header has no model config");
  }
  return checkpoint.header.at("model").get<net::MsfcnConfig>();
}

// ---------------------------------------------------------------- inference

Predictor::Predictor(const net::MsfcnConfig& config, const nn::CheckpointData& checkpoint, patch::MeanImage mean)
    : config_(config), mean_(std::move(mean)) {
  config_.validate();
  auto graph = std::make_unique<nn::NetworkGraph<float>>(net::build<float>(config_));
  nn::apply_checkpoint(checkpoint, *graph);
  for (auto* p : graph->parameters()) weights_.emplace(p->name, p->value);
  replicas_.push_back(std::move(graph));
  if (mean_.size != config_.backbone.patch_size) throw Error(Errc::shape_mismatch, "mean image size differs");
}

Predictor::Predictor(const net::MsfcnConfig& config, nn::NetworkGraph<float>& trained, patch::MeanImage mean)
    : config_(config), mean_(std::move(mean)) {
  config_.validate();
  for (auto* p : trained.parameters()) weights_.emplace(p->name, p->value);
  if (mean_.size != config_.backbone.patch_size) throw Error(Errc::shape_mismatch, "mean image size differs");
}

Predictor::~Predictor() = default;

nn::NetworkGraph<float>& Predictor::replica(int worker) {
  while (static_cast<int>(replicas_.size()) <= worker) {
    auto graph = std::make_unique<nn::NetworkGraph<float>>(net::build<float>(config_));
    for (auto* p : graph->parameters()) {
      const auto it = weights_.find(p->name);
      if (it == weights_.end() || it->second.shape() != p->value.shape()) {
        throw Error(Errc::checkpoint_mismatch, "no weights for " + p->name);
      }
      p->value = it->second;
    }
    replicas_.push_back(std::move(graph));
  }
  return *replicas_[worker];
}

LabelMask Predictor::predict_patch(const RgbRaster& patch, int worker, double* seconds) {
  auto& graph = replica(worker);
  const nn::Tensor x = patch::normalize<float>(patch, mean_);
  const auto t0 = Clock::now();
  const auto classes = nn::argmax_channels(graph.forward(x, kInfer));
  if (seconds != nullptr) *seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return to_mask(classes, 0, patch.width);
}

LabelMask Predictor::infer_slide(const RgbRaster& slide, int threads, InferenceTiming* timing) {
  const int size = patch_size();
  const auto tiles = patch::tile_grid("slide", slide.width, slide.height, size);
  std::vector<std::pair<patch::PatchRecord, LabelMask>> predicted(tiles.size());
  std::vector<double> seconds(tiles.size(), 0.0);
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(tiles.size())));
  for (int w = 0; w < workers; ++w) replica(w);

  std::atomic<std::size_t> next{0};
  auto work = [&](int w) {
    for (std::size_t i = next++; i < tiles.size(); i = next++) {
      predicted[i] = {tiles[i], predict_patch(patch::crop_raster(slide, tiles[i]), w, &seconds[i])};
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
          next = tiles.size();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  if (timing != nullptr) {
    timing->patches += tiles.size();
    for (double s : seconds) timing->network_seconds += s;
  }
  return patch::stitch(predicted);
}

eval::ConfusionMatrix evaluate_patches(Predictor& predictor, const PatchSet& set) {
  eval::ConfusionMatrix cm;
  for (std::size_t i = 0; i < set.size(); ++i) cm.accumulate(set.labels[i], predictor.predict_patch(set.features[i]));
  return cm;
}

}  // namespace msfcn::train
