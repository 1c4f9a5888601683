#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msfcn/nn/layers.hpp"

namespace msfcn::nn {

// Layer DAG over named blobs. Nodes run in insertion order, which must be a
// topological order; the input blob is called "data".
template <typename T>
class NetworkGraph {
 public:
  using TensorT = BasicTensor<T>;

  struct Node {
    std::string name;
    std::unique_ptr<Layer<T>> layer;
    std::vector<int> inputs;
    int output = -1;
  };

  NetworkGraph();
  NetworkGraph(NetworkGraph&&) noexcept = default;
  NetworkGraph& operator=(NetworkGraph&&) noexcept = default;

  Layer<T>& add(const std::string& name, std::unique_ptr<Layer<T>> layer,
                const std::vector<std::string>& inputs);

  template <class L, class... Args>
  L& emplace(const std::string& name, const std::vector<std::string>& inputs, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(name, std::move(layer), inputs);
    return ref;
  }

  void set_output(const std::string& blob);
  const std::string& output_name() const noexcept { return blob_names_[output_]; }

  const TensorT& forward(const TensorT& input, const RunContext& ctx);

  // Back-propagates d loss / d output through the last forward pass.
  void backward(const TensorT& grad_output, bool want_input_grad = false);
  const TensorT& input_grad() const { return grads_[0]; }

  void zero_grad();

  std::vector<Parameter<T>*> parameters();
  Parameter<T>* find_parameter(const std::string& name);
  std::size_t parameter_count() const;

  bool has_blob(const std::string& name) const { return blob_index_.count(name) != 0; }
  const TensorT& blob(const std::string& name) const;
  Layer<T>& layer(const std::string& name);
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  int blob_id(const std::string& name) const;

  std::vector<Node> nodes_;
  std::vector<std::string> blob_names_;
  std::map<std::string, int> blob_index_;
  std::vector<TensorT> blobs_;
  std::vector<TensorT> grads_;
  int output_ = 0;
};

}  // namespace msfcn::nn
