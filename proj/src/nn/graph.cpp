#include "msfcn/nn/graph.hpp"

#include "msfcn/error.hpp"

namespace msfcn::nn {

template <typename T>
NetworkGraph<T>::NetworkGraph() {
  blob_names_.push_back("data");
  blob_index_["data"] = 0;
}

template <typename T>
int NetworkGraph<T>::blob_id(const std::string& name) const {
  const auto it = blob_index_.find(name);
  if (it == blob_index_.end()) throw Error(Errc::invalid_config, "unknown blob: " + name);
  return it->second;
}

template <typename T>
Layer<T>& NetworkGraph<T>::add(const std::string& name, std::unique_ptr<Layer<T>> layer,
                               const std::vector<std::string>& inputs) {
  if (blob_index_.count(name) != 0) throw Error(Errc::invalid_config, "duplicate node: " + name);
  Node node;
  node.name = name;
  for (const auto& in : inputs) node.inputs.push_back(blob_id(in));
  node.output = static_cast<int>(blob_names_.size());
  for (auto& p : layer->parameters()) p.name = name + "/" + p.name;
  node.layer = std::move(layer);
  blob_names_.push_back(name);
  blob_index_[name] = node.output;
  output_ = node.output;
  nodes_.push_back(std::move(node));
  return *nodes_.back().layer;
}

template <typename T>
void NetworkGraph<T>::set_output(const std::string& blob) {
  output_ = blob_id(blob);
}

template <typename T>
auto NetworkGraph<T>::forward(const TensorT& input, const RunContext& ctx) -> const TensorT& {
  blobs_.resize(blob_names_.size());
  blobs_[0] = input;
  std::vector<const TensorT*> ins;
  for (auto& node : nodes_) {
    ins.clear();
    for (int id : node.inputs) ins.push_back(&blobs_[id]);
    blobs_[node.output] = node.layer->forward(ins, ctx);
#ifndef NDEBUG
    blobs_[node.output].debug_check_finite();
#endif
  }
  return blobs_[output_];
}

template <typename T>
void NetworkGraph<T>::backward(const TensorT& grad_output, bool want_input_grad) {
  if (blobs_.size() != blob_names_.size()) throw Error(Errc::invalid_config, "backward before forward");
  if (grad_output.shape() != blobs_[output_].shape()) {
    throw Error(Errc::shape_mismatch, "output grad " + to_string(grad_output.shape()) + " vs " +
                                          to_string(blobs_[output_].shape()));
  }
  grads_.assign(blob_names_.size(), TensorT());
  grads_[output_] = grad_output;
  std::vector<const TensorT*> ins;
  std::vector<TensorT*> gins;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = *it;
    if (grads_[node.output].empty()) continue;
    ins.clear();
    gins.clear();
    for (int id : node.inputs) {
      ins.push_back(&blobs_[id]);
      if (id == 0 && !want_input_grad) {
        gins.push_back(nullptr);
        continue;
      }
      if (grads_[id].empty()) grads_[id].reset(blobs_[id].shape());
      gins.push_back(&grads_[id]);
    }
    node.layer->backward(ins, grads_[node.output], gins);
  }
}

template <typename T>
void NetworkGraph<T>::zero_grad() {
  for (auto& node : nodes_) {
    for (auto& p : node.layer->parameters()) p.grad.fill(T(0));
  }
}

template <typename T>
std::vector<Parameter<T>*> NetworkGraph<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& node : nodes_) {
    for (auto& p : node.layer->parameters()) out.push_back(&p);
  }
  return out;
}

template <typename T>
Parameter<T>* NetworkGraph<T>::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
std::size_t NetworkGraph<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& node : nodes_) {
    for (const auto& p : node.layer->parameters()) total += p.value.size();
  }
  return total;
}

template <typename T>
auto NetworkGraph<T>::blob(const std::string& name) const -> const TensorT& {
  const int id = blob_id(name);
  if (static_cast<std::size_t>(id) >= blobs_.size()) throw Error(Errc::invalid_config, "blob not computed: " + name);
  return blobs_[id];
}

template <typename T>
Layer<T>& NetworkGraph<T>::layer(const std::string& name) {
  for (auto& node : nodes_) {
    if (node.name == name) return *node.layer;
  }
  throw Error(Errc::invalid_config, "unknown node: " + name);
}

template class NetworkGraph<float>;
template class NetworkGraph<double>;

}  // namespace msfcn::nn
