#include "msfcn/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

#include "linalg.hpp"
#include "msfcn/error.hpp"
#include "msfcn/random.hpp"

namespace msfcn::nn {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return os.str();
}

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::deconv: return "deconv";
    case LayerKind::crop: return "crop";
    case LayerKind::wsum: return "wsum";
    case LayerKind::softmax_loss: return "softmax_loss";
  }
  return "unknown";
}

namespace {

template <typename T>
const BasicTensor<T>& single_input(std::span<const BasicTensor<T>* const> inputs, std::string_view who) {
  if (inputs.empty() || inputs[0] == nullptr) {
    throw Error(Errc::shape_mismatch, std::string(who) + " expects one input");
  }
  return *inputs[0];
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : cin_(in_channels), cout_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {
  if (cin_ <= 0 || cout_ <= 0 || kernel_ <= 0 || stride_ <= 0 || pad_ < 0) {
    throw Error(Errc::invalid_config, "conv hyperparameters must be positive");
  }
  params_.push_back({"weight", TensorT({cout_, cin_, kernel_, kernel_}),
                     TensorT({cout_, cin_, kernel_, kernel_}), true});
  params_.push_back({"bias", TensorT({1, cout_, 1, 1}), TensorT({1, cout_, 1, 1}), true});
}

template <typename T>
std::string Conv2d<T>::describe() const {
  std::ostringstream os;
  os << "conv " << cin_ << "->" << cout_ << " k" << kernel_ << " s" << stride_ << " p" << pad_;
  return os.str();
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  if (in.c != cin_) {
    throw Error(Errc::shape_mismatch, "conv expects " + std::to_string(cin_) +
                                          " channels, got " + to_string(in));
  }
  if (in.h + 2 * pad_ < kernel_ || in.w + 2 * pad_ < kernel_) {
    throw Error(Errc::shape_mismatch, "conv input smaller than kernel: " + to_string(in));
  }
  return {in.n, cout_, (in.h + 2 * pad_ - kernel_) / stride_ + 1,
          (in.w + 2 * pad_ - kernel_) / stride_ + 1};
}

template <typename T>
void Conv2d<T>::init(FillMode mode, std::mt19937_64& rng, double gain) {
  auto& w = params_[0].value;
  switch (mode) {
    case FillMode::he_normal: {
      const double stddev = gain * std::sqrt(2.0 / (static_cast<double>(cin_) * kernel_ * kernel_));
      for (auto& v : w.values()) v = static_cast<T>(stddev * normal01(rng));
      break;
    }
    case FillMode::zeros:
      w.fill(T(0));
      break;
    case FillMode::bilinear:
      throw Error(Errc::invalid_config, "bilinear fill is only defined for deconvolution");
  }
  params_[1].value.fill(T(0));
}

template <typename T>
auto Conv2d<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  const TensorT& x = single_input(inputs, "conv");
  const Shape os = output_shape(x.shape());
  TensorT y(os);
  const int k2c = cin_ * kernel_ * kernel_;
  const int out_plane = os.h * os.w;
  const bool pointwise = kernel_ == 1 && stride_ == 1 && pad_ == 0;
  if (!pointwise) col_.resize(static_cast<std::size_t>(k2c) * out_plane);
  const T* wptr = params_[0].value.data();
  const T* bptr = params_[1].value.data();
  for (int n = 0; n < os.n; ++n) {
    const T* src = x.image(n);
    if (!pointwise) {
      detail::im2col(src, cin_, x.shape().h, x.shape().w, kernel_, stride_, pad_, os.h, os.w, col_.data());
      src = col_.data();
    }
    T* dst = y.image(n);
    for (int c = 0; c < cout_; ++c) {
      std::fill(dst + static_cast<std::size_t>(c) * out_plane,
                dst + static_cast<std::size_t>(c + 1) * out_plane, bptr[c]);
    }
    detail::gemm(false, false, cout_, out_plane, k2c, wptr, src, dst, true);
  }
  return y;
}

template <typename T>
void Conv2d<T>::backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                         std::span<TensorT* const> grad_inputs) {
  const TensorT& x = single_input(inputs, "conv");
  const Shape os = output_shape(x.shape());
  if (grad_output.shape() != os) throw Error(Errc::shape_mismatch, "conv grad shape");
  const int k2c = cin_ * kernel_ * kernel_;
  const int out_plane = os.h * os.w;
  const bool pointwise = kernel_ == 1 && stride_ == 1 && pad_ == 0;
  TensorT* dx = grad_inputs.empty() ? nullptr : grad_inputs[0];
  std::vector<T> dcol;
  if (dx != nullptr && !pointwise) dcol.resize(static_cast<std::size_t>(k2c) * out_plane);
  if (!pointwise) col_.resize(static_cast<std::size_t>(k2c) * out_plane);
  T* dw = params_[0].grad.data();
  T* db = params_[1].grad.data();
  const T* wptr = params_[0].value.data();
  for (int n = 0; n < os.n; ++n) {
    const T* g = grad_output.image(n);
    for (int c = 0; c < cout_; ++c) {
      T acc = 0;
      const T* gp = g + static_cast<std::size_t>(c) * out_plane;
      for (int i = 0; i < out_plane; ++i) acc += gp[i];
      db[c] += acc;
    }
    const T* src = x.image(n);
    if (!pointwise) {
      detail::im2col(src, cin_, x.shape().h, x.shape().w, kernel_, stride_, pad_, os.h, os.w, col_.data());
      src = col_.data();
    }
    // dW += dY * col^T
    detail::gemm(false, true, cout_, k2c, out_plane, g, src, dw, true);
    if (dx != nullptr) {
      if (pointwise) {
        detail::gemm(true, false, k2c, out_plane, cout_, wptr, g, dx->image(n), true);
      } else {
        detail::gemm(true, false, k2c, out_plane, cout_, wptr, g, dcol.data(), false);
        detail::col2im(dcol.data(), cin_, x.shape().h, x.shape().w, kernel_, stride_, pad_, os.h,
                       os.w, dx->image(n));
      }
    }
  }
}

// ---------------------------------------------------------------- Deconv2d

double bilinear_tap(int kernel, int i) {
  const int factor = (kernel + 1) / 2;
  const double center = (kernel - 1) / 2.0;
  return 1.0 - std::abs(i - center) / factor;
}

template <typename T>
Deconv2d<T>::Deconv2d(int in_channels, int out_channels, int kernel, int stride)
    : cin_(in_channels), cout_(out_channels), kernel_(kernel), stride_(stride) {
  if (cin_ <= 0 || cout_ <= 0 || kernel_ <= 0) {
    throw Error(Errc::invalid_config, "deconv hyperparameters must be positive");
  }
  if (stride_ != 2 && stride_ != 4 && stride_ != 8 && stride_ != 16 && stride_ != 32) {
    throw Error(Errc::invalid_config, "deconv stride must be one of 2,4,8,16,32");
  }
  params_.push_back({"weight", TensorT({cin_, cout_, kernel_, kernel_}),
                     TensorT({cin_, cout_, kernel_, kernel_}), true});
}

template <typename T>
std::string Deconv2d<T>::describe() const {
  std::ostringstream os;
  os << "deconv " << cin_ << "->" << cout_ << " k" << kernel_ << " s" << stride_
     << (params_[0].learnable ? "" : " frozen");
  return os.str();
}

template <typename T>
Shape Deconv2d<T>::output_shape(const Shape& in) const {
  if (in.c != cin_) {
    throw Error(Errc::shape_mismatch, "deconv expects " + std::to_string(cin_) +
                                          " channels, got " + to_string(in));
  }
  return {in.n, cout_, stride_ * (in.h - 1) + kernel_, stride_ * (in.w - 1) + kernel_};
}

template <typename T>
void Deconv2d<T>::init(FillMode mode, std::mt19937_64& rng) {
  auto& w = params_[0].value;
  w.fill(T(0));
  switch (mode) {
    case FillMode::bilinear:
      for (int c = 0; c < std::min(cin_, cout_); ++c) {
        for (int i = 0; i < kernel_; ++i) {
          for (int j = 0; j < kernel_; ++j) {
            w.at(c, c, i, j) = static_cast<T>(bilinear_tap(kernel_, i) * bilinear_tap(kernel_, j));
          }
        }
      }
      break;
    case FillMode::he_normal: {
      const double stddev = std::sqrt(2.0 / (static_cast<double>(cin_) * kernel_ * kernel_));
      for (auto& v : w.values()) v = static_cast<T>(stddev * normal01(rng));
      break;
    }
    case FillMode::zeros:
      break;
  }
}

template <typename T>
auto Deconv2d<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  const TensorT& x = single_input(inputs, "deconv");
  const Shape os = output_shape(x.shape());
  TensorT y(os);
  const int rows = cout_ * kernel_ * kernel_;
  const int in_plane = x.shape().h * x.shape().w;
  col_.resize(static_cast<std::size_t>(rows) * in_plane);
  for (int n = 0; n < os.n; ++n) {
    // col = W^T x, W stored as cin x (cout*k*k)
    detail::gemm(true, false, rows, in_plane, cin_, params_[0].value.data(), x.image(n), col_.data(), false);
    detail::col2im(col_.data(), cout_, os.h, os.w, kernel_, stride_, 0, x.shape().h, x.shape().w,
                   y.image(n));
  }
  return y;
}

template <typename T>
void Deconv2d<T>::backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                           std::span<TensorT* const> grad_inputs) {
  const TensorT& x = single_input(inputs, "deconv");
  const Shape os = output_shape(x.shape());
  if (grad_output.shape() != os) throw Error(Errc::shape_mismatch, "deconv grad shape");
  const int rows = cout_ * kernel_ * kernel_;
  const int in_plane = x.shape().h * x.shape().w;
  TensorT* dx = grad_inputs.empty() ? nullptr : grad_inputs[0];
  col_.resize(static_cast<std::size_t>(rows) * in_plane);
  for (int n = 0; n < os.n; ++n) {
    detail::im2col(grad_output.image(n), cout_, os.h, os.w, kernel_, stride_, 0, x.shape().h,
                   x.shape().w, col_.data());
    if (params_[0].learnable) {
      // dW += x * dcol^T
      detail::gemm(false, true, cin_, rows, in_plane, x.image(n), col_.data(),
                   params_[0].grad.data(), true);
    }
    if (dx != nullptr) {
      detail::gemm(false, false, cin_, in_plane, rows, params_[0].value.data(), col_.data(),
                   dx->image(n), true);
    }
  }
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
std::string MaxPool2d<T>::describe() const {
  return "maxpool k" + std::to_string(kernel_) + " s" + std::to_string(stride_);
}

template <typename T>
auto MaxPool2d<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  const TensorT& x = single_input(inputs, "maxpool");
  const Shape& is = x.shape();
  if (is.h < kernel_ || is.w < kernel_) throw Error(Errc::shape_mismatch, "maxpool input too small");
  const Shape os{is.n, is.c, (is.h - kernel_) / stride_ + 1, (is.w - kernel_) / stride_ + 1};
  TensorT y(os);
  argmax_.assign(os.count(), 0);
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (int oh = 0; oh < os.h; ++oh) {
        for (int ow = 0; ow < os.w; ++ow, ++o) {
          std::size_t best = base + static_cast<std::size_t>(oh * stride_) * is.w + ow * stride_;
          T best_v = x[best];
          for (int ki = 0; ki < kernel_; ++ki) {
            for (int kj = 0; kj < kernel_; ++kj) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oh * stride_ + ki) * is.w + ow * stride_ + kj;
              if (x[idx] > best_v) {
                best_v = x[idx];
                best = idx;
              }
            }
          }
          y[o] = best_v;
          argmax_[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return y;
}

template <typename T>
void MaxPool2d<T>::backward(std::span<const TensorT* const>, const TensorT& grad_output,
                            std::span<TensorT* const> grad_inputs) {
  if (grad_inputs.empty() || grad_inputs[0] == nullptr) return;
  if (grad_output.size() != argmax_.size()) throw Error(Errc::shape_mismatch, "maxpool grad shape");
  TensorT& dx = *grad_inputs[0];
  for (std::size_t o = 0; o < argmax_.size(); ++o) dx[argmax_[o]] += grad_output[o];
}

// ---------------------------------------------------------------- Relu

template <typename T>
auto Relu<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  const TensorT& x = single_input(inputs, "relu");
  TensorT y(x.shape());
  if constexpr (std::is_same_v<T, float>) {
    simd::active().relu(x.size(), x.data(), y.data());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : T(0);
  }
  return y;
}

template <typename T>
void Relu<T>::backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                       std::span<TensorT* const> grad_inputs) {
  if (grad_inputs.empty() || grad_inputs[0] == nullptr) return;
  const TensorT& x = single_input(inputs, "relu");
  TensorT& dx = *grad_inputs[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0) dx[i] += grad_output[i];
  }
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::invalid_config, "dropout rate must be in [0,1)");
}

template <typename T>
std::string Dropout<T>::describe() const {
  std::ostringstream os;
  os << "dropout " << rate_;
  return os.str();
}

template <typename T>
auto Dropout<T>::forward(std::span<const TensorT* const> inputs, const RunContext& ctx) -> TensorT {
  const TensorT& x = single_input(inputs, "dropout");
  if (ctx.mode == Mode::infer || rate_ == 0.0) {
    mask_.clear();
    return x;
  }
  if (ctx.rng == nullptr) throw Error(Errc::invalid_config, "dropout in train mode needs an RNG");
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  mask_.resize(x.size());
  TensorT y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = uniform01(*ctx.rng) >= rate_ ? scale : T(0);
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
void Dropout<T>::backward(std::span<const TensorT* const>, const TensorT& grad_output,
                          std::span<TensorT* const> grad_inputs) {
  if (grad_inputs.empty() || grad_inputs[0] == nullptr) return;
  TensorT& dx = *grad_inputs[0];
  if (mask_.empty()) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += grad_output[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += grad_output[i] * mask_[i];
  }
}

// ---------------------------------------------------------------- Crop

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& x, int target_h, int target_w, int offset_h, int offset_w) {
  const Shape& is = x.shape();
  if (offset_h < 0 || offset_w < 0 || offset_h + target_h > is.h || offset_w + target_w > is.w) {
    throw Error(Errc::target_too_large, "crop " + std::to_string(target_h) + "x" +
                                            std::to_string(target_w) + " at offset " +
                                            std::to_string(offset_h) + " from " + to_string(is));
  }
  BasicTensor<T> y({is.n, is.c, target_h, target_w});
  for (int n = 0; n < is.n; ++n) {
    for (int c = 0; c < is.c; ++c) {
      for (int h = 0; h < target_h; ++h) {
        const T* src = &x.at(n, c, h + offset_h, offset_w);
        std::copy(src, src + target_w, &y.at(n, c, h, 0));
      }
    }
  }
  return y;
}

template <typename T>
std::string Crop<T>::describe() const {
  return "crop offset " + std::to_string(off_h_) + "," + std::to_string(off_w_);
}

template <typename T>
auto Crop<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  const TensorT& x = single_input(inputs, "crop");
  int th = 0;
  int tw = 0;
  if (inputs.size() >= 2 && inputs[1] != nullptr) {
    th = inputs[1]->shape().h;
    tw = inputs[1]->shape().w;
  } else if (target_h_ && target_w_) {
    th = *target_h_;
    tw = *target_w_;
  } else {
    throw Error(Errc::invalid_config, "crop needs a fixed target or a reference input");
  }
  return crop(x, th, tw, off_h_, off_w_);
}

template <typename T>
void Crop<T>::backward(std::span<const TensorT* const>, const TensorT& grad_output,
                       std::span<TensorT* const> grad_inputs) {
  if (grad_inputs.empty() || grad_inputs[0] == nullptr) return;
  TensorT& dx = *grad_inputs[0];
  const Shape& gs = grad_output.shape();
  for (int n = 0; n < gs.n; ++n) {
    for (int c = 0; c < gs.c; ++c) {
      for (int h = 0; h < gs.h; ++h) {
        const T* src = &grad_output.at(n, c, h, 0);
        T* dst = &dx.at(n, c, h + off_h_, off_w_);
        for (int w = 0; w < gs.w; ++w) dst[w] += src[w];
      }
    }
  }
}

// ---------------------------------------------------------------- WeightedSum

template <typename T>
BasicTensor<T> wsum(std::span<const BasicTensor<T>* const> inputs, std::span<const double> weights) {
  if (inputs.empty() || inputs.size() != weights.size()) {
    throw Error(Errc::shape_mismatch, "wsum needs one weight per input");
  }
  const Shape s = inputs[0]->shape();
  for (const auto* in : inputs) {
    if (in->shape() != s) {
      throw Error(Errc::shape_mismatch, "wsum inputs differ: " + to_string(s) + " vs " + to_string(in->shape()));
    }
  }
  BasicTensor<T> y(s);
  const T w0 = static_cast<T>(weights[0]);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = w0 * (*inputs[0])[i];
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    detail::axpy(y.size(), static_cast<T>(weights[k]), inputs[k]->data(), y.data());
  }
  return y;
}

template <typename T>
WeightedSum<T>::WeightedSum(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw Error(Errc::invalid_config, "wsum needs at least one weight");
  for (double w : weights_) {
    if (!std::isfinite(w)) throw Error(Errc::invalid_config, "wsum weights must be finite");
  }
}

template <typename T>
std::string WeightedSum<T>::describe() const {
  std::ostringstream os;
  os << "wsum";
  for (double w : weights_) os << " " << w;
  return os.str();
}

template <typename T>
auto WeightedSum<T>::forward(std::span<const TensorT* const> inputs, const RunContext&) -> TensorT {
  return wsum<T>(inputs, weights_);
}

template <typename T>
void WeightedSum<T>::backward(std::span<const TensorT* const>, const TensorT& grad_output,
                              std::span<TensorT* const> grad_inputs) {
  for (std::size_t k = 0; k < grad_inputs.size() && k < weights_.size(); ++k) {
    if (grad_inputs[k] == nullptr) continue;
    detail::axpy(grad_output.size(), static_cast<T>(weights_[k]), grad_output.data(),
                 grad_inputs[k]->data());
  }
}

#define MSFCN_INSTANTIATE(T)                                                              \
  template class Conv2d<T>;                                                               \
  template class Deconv2d<T>;                                                             \
  template class MaxPool2d<T>;                                                            \
  template class Relu<T>;                                                                 \
  template class Dropout<T>;                                                              \
  template class Crop<T>;                                                                 \
  template class WeightedSum<T>;                                                          \
  template BasicTensor<T> crop<T>(const BasicTensor<T>&, int, int, int, int);             \
  template BasicTensor<T> wsum<T>(std::span<const BasicTensor<T>* const>, std::span<const double>);

MSFCN_INSTANTIATE(float)
MSFCN_INSTANTIATE(double)

#undef MSFCN_INSTANTIATE

}  // namespace msfcn::nn
