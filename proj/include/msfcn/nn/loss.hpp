#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msfcn/nn/tensor.hpp"

namespace msfcn::nn {

template <typename T>
struct LossResult {
  double loss = 0.0;         // mean negative log-likelihood over counted pixels
  BasicTensor<T> grad;       // d loss / d scores
  std::size_t counted = 0;   // pixels contributing (ignored class excluded)
};

// Per-pixel softmax over channels followed by the multinomial (cross-entropy)
// loss. `labels` holds n*h*w class ids in NCHW pixel order.
template <typename T>
LossResult<T> softmax_multinomial_loss(const BasicTensor<T>& scores,
                                       std::span<const std::uint8_t> labels,
                                       std::optional<int> ignore = std::nullopt);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& scores);

// Per-pixel argmax over channels (lowest channel wins ties), n*h*w bytes.
template <typename T>
std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>& scores);

}  // namespace msfcn::nn
