#include "msfcn/nn/sgd.hpp"

#include <cmath>
#include <type_traits>

#include "msfcn/error.hpp"
#include "msfcn/simd/kernels.hpp"

namespace msfcn::nn {

void SgdConfig::validate() const {
  if (!(lr_end < lr_start) || !(lr_end > 0.0)) {
    throw Error(Errc::invalid_config, "need 0 < lr_end < lr_start");
  }
  if (minibatch < 1) throw Error(Errc::invalid_config, "minibatch must be >= 1");
  if (epochs < 0) throw Error(Errc::invalid_config, "epochs must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::invalid_config, "momentum must be in [0,1)");
  if (!(steepness > 0.0)) throw Error(Errc::invalid_config, "steepness must be positive");
}

void to_json(nlohmann::json& j, const SgdConfig& c) {
  j = {{"lr_start", c.lr_start}, {"lr_end", c.lr_end},       {"steepness", c.steepness}, {"momentum", c.momentum},
       {"minibatch", c.minibatch}, {"epochs", c.epochs}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SgdConfig& c) {
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.steepness = j.value("steepness", c.steepness);
  c.momentum = j.value("momentum", c.momentum);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
}

double learning_rate(const SgdConfig& config, long iteration, long total) {
  if (total <= 0) return config.lr_start;
  const double u = static_cast<double>(iteration) / static_cast<double>(total);
  const auto logistic = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double lo = logistic(-config.steepness / 2.0);
  const double f = (logistic(-config.steepness * (u - 0.5)) - lo) / (1.0 - 2.0 * lo);
  return (config.lr_start + config.lr_end) / 2.0 + (config.lr_start - config.lr_end) * (f - 0.5);
}

template <typename T>
SgdOptimizer<T>::SgdOptimizer(SgdConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void SgdOptimizer<T>::step(std::span<Parameter<T>* const> params, long iteration, long total) {
  if (iteration > total) throw Error(Errc::invalid_config, "iteration beyond schedule");
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->value.size(), T(0));
  }
  const T lr = static_cast<T>(learning_rate(config_, iteration, total));
  const T mu = static_cast<T>(config_.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.learnable) continue;
    auto& v = velocity_[i];
    if constexpr (std::is_same_v<T, float>) {
      simd::active().momentum_step(v.size(), lr, mu, p.grad.data(), v.data(), p.value.data());
    } else {
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = mu * v[j] - lr * p.grad[j];
        p.value[j] += v[j];
      }
    }
  }
}

template class SgdOptimizer<float>;
template class SgdOptimizer<double>;

}  // namespace msfcn::nn
