#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msfcn/nn/tensor.hpp"

namespace msfcn::nn {

enum class Mode { train, infer };

enum class LayerKind { conv, maxpool, relu, dropout, deconv, crop, wsum, softmax_loss };

std::string_view layer_kind_name(LayerKind kind) noexcept;

struct RunContext {
  Mode mode = Mode::infer;
  std::mt19937_64* rng = nullptr;  // required by dropout in train mode
};

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool learnable = true;
};

template <typename T>
class Layer {
 public:
  using TensorT = BasicTensor<T>;

  virtual ~Layer() = default;

  virtual LayerKind kind() const noexcept = 0;
  virtual std::string describe() const = 0;

  virtual TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) = 0;

  // Accumulates into grad_inputs (entries may be null) and into parameter grads.
  // Must follow the forward call on the same inputs.
  virtual void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                        std::span<TensorT* const> grad_inputs) = 0;

  virtual std::span<Parameter<T>> parameters() { return {}; }
};

enum class FillMode { he_normal, bilinear, zeros };

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;

  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0);

  LayerKind kind() const noexcept override { return LayerKind::conv; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;
  std::span<Parameter<T>> parameters() override { return params_; }

  Parameter<T>& weight() { return params_[0]; }
  Parameter<T>& bias() { return params_[1]; }

  // He-normal with an optional gain applied to the standard deviation; biases zeroed.
  void init(FillMode mode, std::mt19937_64& rng, double gain = 1.0);

  Shape output_shape(const Shape& in) const;

 private:
  int cin_, cout_, kernel_, stride_, pad_;
  std::vector<Parameter<T>> params_;
  std::vector<T> col_;
};

// Transposed convolution with stride s: output = s * (in - 1) + kernel. No bias.
template <typename T>
class Deconv2d final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;

  Deconv2d(int in_channels, int out_channels, int kernel, int stride);

  LayerKind kind() const noexcept override { return LayerKind::deconv; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;
  std::span<Parameter<T>> parameters() override { return params_; }

  Parameter<T>& weight() { return params_[0]; }
  void init(FillMode mode, std::mt19937_64& rng);
  void set_frozen(bool frozen) { params_[0].learnable = !frozen; }
  int stride() const noexcept { return stride_; }
  int kernel() const noexcept { return kernel_; }

  Shape output_shape(const Shape& in) const;

 private:
  int cin_, cout_, kernel_, stride_;
  std::vector<Parameter<T>> params_;
  std::vector<T> col_;
};

// Bilinear interpolation weight for tap `i` of a 1-D kernel of size `kernel`.
double bilinear_tap(int kernel, int i);

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;
  explicit MaxPool2d(int kernel = 2, int stride = 2) : kernel_(kernel), stride_(stride) {}

  LayerKind kind() const noexcept override { return LayerKind::maxpool; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;

 private:
  int kernel_, stride_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;
  LayerKind kind() const noexcept override { return LayerKind::relu; }
  std::string describe() const override { return "relu"; }
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;
};

// Inverted dropout: kept units are scaled by 1/(1-rate) in train mode.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;
  explicit Dropout(double rate);

  LayerKind kind() const noexcept override { return LayerKind::dropout; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;
  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  std::vector<T> mask_;  // empty => identity
};

// Spatial crop starting at (offset_h, offset_w). The target extent is either
// fixed at construction or taken from a second "reference" input.
template <typename T>
class Crop final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;
  Crop(int offset_h, int offset_w) : off_h_(offset_h), off_w_(offset_w) {}
  Crop(int offset_h, int offset_w, int target_h, int target_w)
      : off_h_(offset_h), off_w_(offset_w), target_h_(target_h), target_w_(target_w) {}

  LayerKind kind() const noexcept override { return LayerKind::crop; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;

 private:
  int off_h_, off_w_;
  std::optional<int> target_h_, target_w_;
};

// Weighted element-wise sum of equally shaped inputs.
template <typename T>
class WeightedSum final : public Layer<T> {
 public:
  using TensorT = BasicTensor<T>;
  explicit WeightedSum(std::vector<double> weights);

  LayerKind kind() const noexcept override { return LayerKind::wsum; }
  std::string describe() const override;
  TensorT forward(std::span<const TensorT* const> inputs, const RunContext& ctx) override;
  void backward(std::span<const TensorT* const> inputs, const TensorT& grad_output,
                std::span<TensorT* const> grad_inputs) override;
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<double> weights_;
};

// Free-function forms for direct use and tests.
template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& x, int target_h, int target_w, int offset_h, int offset_w);

template <typename T>
BasicTensor<T> wsum(std::span<const BasicTensor<T>* const> inputs, std::span<const double> weights);

}  // namespace msfcn::nn
