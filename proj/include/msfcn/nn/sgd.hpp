#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "msfcn/nn/layers.hpp"

namespace msfcn::nn {

struct SgdConfig {
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  double steepness = 12.0;  // logistic slope over the normalized run t/T
  double momentum = 0.9;
  int minibatch = 2;
  int epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

// Missing keys keep their current values.
void to_json(nlohmann::json& j, const SgdConfig& c);
void from_json(const nlohmann::json& j, SgdConfig& c);

// Sigmoid decay from lr_start (t = 0) to lr_end (t = T). The logistic
// sigma(-k (t/T - 1/2)) is rescaled to [0, 1] so both endpoints are met, and
// lr(T/2) is the exact midpoint (lr_start + lr_end) / 2.
double learning_rate(const SgdConfig& config, long iteration, long total);

template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config);

  // One update at iteration t of T: v = momentum * v - lr(t) * g; w += v.
  // Frozen parameters are skipped.
  void step(std::span<Parameter<T>* const> params, long iteration, long total);

  const SgdConfig& config() const noexcept { return config_; }
  void reset() { velocity_.clear(); }

 private:
  SgdConfig config_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace msfcn::nn
