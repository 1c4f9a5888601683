#include "msfcn/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "msfcn/error.hpp"

namespace msfcn::nn {

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& scores) {
  const Shape& s = scores.shape();
  BasicTensor<T> p(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* in = scores.image(n);
    T* out = p.image(n);
    for (std::size_t px = 0; px < plane; ++px) {
      T mx = in[px];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, in[c * plane + px]);
      T sum = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(in[c * plane + px] - mx);
        out[c * plane + px] = e;
        sum += e;
      }
      for (int c = 0; c < s.c; ++c) out[c * plane + px] /= sum;
    }
  }
  return p;
}

template <typename T>
LossResult<T> softmax_multinomial_loss(const BasicTensor<T>& scores,
                                       std::span<const std::uint8_t> labels,
                                       std::optional<int> ignore) {
  const Shape& s = scores.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane) {
    throw Error(Errc::shape_mismatch, "label count " + std::to_string(labels.size()) +
                                          " does not match scores " + to_string(s));
  }
  LossResult<T> result;
  result.grad = softmax(scores);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t px = 0; px < plane; ++px) {
      const int label = labels[n * plane + px];
      if (ignore && label == *ignore) continue;
      if (label >= s.c) throw Error(Errc::shape_mismatch, "label out of range: " + std::to_string(label));
      ++result.counted;
    }
  }
  if (result.counted == 0) {
    result.grad.fill(T(0));
    return result;
  }
  const double inv = 1.0 / static_cast<double>(result.counted);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    T* g = result.grad.image(n);
    const T* in = scores.image(n);
    for (std::size_t px = 0; px < plane; ++px) {
      const int label = labels[n * plane + px];
      if (ignore && label == *ignore) {
        for (int c = 0; c < s.c; ++c) g[c * plane + px] = 0;
        continue;
      }
      // log p_true via log-sum-exp so large margins do not underflow to log(0).
      T mx = in[px];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, in[c * plane + px]);
      double lse = 0.0;
      for (int c = 0; c < s.c; ++c) lse += std::exp(static_cast<double>(in[c * plane + px] - mx));
      total -= static_cast<double>(in[label * plane + px] - mx) - std::log(lse);
      g[label * plane + px] -= T(1);
      for (int c = 0; c < s.c; ++c) g[c * plane + px] = static_cast<T>(g[c * plane + px] * inv);
    }
  }
  result.loss = total * inv;
  return result;
}

template <typename T>
std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>& scores) {
  const Shape& s = scores.shape();
  const std::size_t plane = s.plane();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n) {
    const T* in = scores.image(n);
    for (std::size_t px = 0; px < plane; ++px) {
      int best = 0;
      T best_v = in[px];
      for (int c = 1; c < s.c; ++c) {
        if (in[c * plane + px] > best_v) {
          best_v = in[c * plane + px];
          best = c;
        }
      }
      out[n * plane + px] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template LossResult<float> softmax_multinomial_loss(const Tensor&, std::span<const std::uint8_t>, std::optional<int>);
template LossResult<double> softmax_multinomial_loss(const TensorD&, std::span<const std::uint8_t>, std::optional<int>);
template Tensor softmax(const Tensor&);
template TensorD softmax(const TensorD&);
template std::vector<std::uint8_t> argmax_channels(const Tensor&);
template std::vector<std::uint8_t> argmax_channels(const TensorD&);

}  // namespace msfcn::nn
