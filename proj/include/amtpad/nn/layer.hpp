#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "amtpad/tensor.hpp"

namespace amtpad::nn {

/// A named tensor owned by a layer. `grad` is null for non-trainable buffers
/// such as batch-norm running statistics.
template <typename T>
struct StateEntry {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  bool trainable() const noexcept { return grad != nullptr; }
};

/// Base of every network layer.
///
/// `forward` is the inference path: it never touches layer state, so a trained
/// network can be evaluated from several threads at once. `forward_train`
/// caches what `backward` needs and must be followed by at most one
/// `backward`, which accumulates parameter gradients and returns the gradient
/// with respect to the layer input.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) const = 0;
  virtual Tensor<T> forward_train(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::string kind() const = 0;

  virtual void collect_state(const std::string& /*prefix*/, std::vector<StateEntry<T>>& /*out*/) {}

  /// Reinitialise trainable weights from `rng`.
  virtual void reset_parameters(std::mt19937_64& /*rng*/) {}
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Layers applied in order; children are named by their insertion index
/// unless a name is given.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  Sequential& add(LayerPtr<T> layer) { return add(std::to_string(layers_.size()), std::move(layer)); }
  Sequential& add(std::string name, LayerPtr<T> layer) {
    layers_.emplace_back(std::move(name), std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i].second; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i].second; }
  const std::string& name_of(std::size_t i) const { return layers_[i].first; }

  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> h = x;
    for (const auto& [_, layer] : layers_) h = layer->forward(h);
    return h;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& [_, layer] : layers_) h = layer->forward_train(h);
    return h;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
    return g;
  }
  Shape output_shape(const Shape& in) const override {
    Shape s = in;
    for (const auto& [_, layer] : layers_) s = layer->output_shape(s);
    return s;
  }
  std::string kind() const override { return "Sequential"; }
  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    for (auto& [name, layer] : layers_) layer->collect_state(join_name(prefix, name), out);
  }
  void reset_parameters(std::mt19937_64& rng) override {
    for (auto& [_, layer] : layers_) layer->reset_parameters(rng);
  }

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> layers_;
};

/// y = x + body(x)
template <typename T>
class Residual final : public Layer<T> {
 public:
  explicit Residual(Sequential<T> body) : body_(std::move(body)) {}

  Sequential<T>& body() noexcept { return body_; }
  const Sequential<T>& body() const noexcept { return body_; }

  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> y = body_.forward(x);
    y += x;
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    Tensor<T> y = body_.forward_train(x);
    y += x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = body_.backward(grad_out);
    g += grad_out;
    return g;
  }
  Shape output_shape(const Shape& in) const override {
    Shape out = body_.output_shape(in);
    if (out != in) throw ContractError("residual body changes shape " + to_string(in) + " -> " + to_string(out));
    return out;
  }
  std::string kind() const override { return "Residual"; }
  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    body_.collect_state(join_name(prefix, "body"), out);
  }
  void reset_parameters(std::mt19937_64& rng) override { body_.reset_parameters(rng); }

 private:
  Sequential<T> body_;
};

/// y = concat_channels(x, body(x)); the building unit of dense blocks.
template <typename T>
class ConcatSkip final : public Layer<T> {
 public:
  explicit ConcatSkip(Sequential<T> body) : body_(std::move(body)) {}

  Tensor<T> forward(const Tensor<T>& x) const override { return concat(x, body_.forward(x)); }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    in_channels_ = x.dim(1);
    return concat(x, body_.forward_train(x));
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
    const int cx = in_channels_, cy = c - cx;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> gx({n, cx, h, w});
    Tensor<T> gy({n, cy, h, w});
    for (int i = 0; i < n; ++i) {
      const T* src = grad_out.sample(i);
      std::copy(src, src + cx * plane, gx.sample(i));
      std::copy(src + cx * plane, src + c * plane, gy.sample(i));
    }
    gx += body_.backward(gy);
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    Shape y = body_.output_shape(in);
    return {in[0], in[1] + y[1], in[2], in[3]};
  }
  std::string kind() const override { return "ConcatSkip"; }
  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    body_.collect_state(prefix, out);
  }
  void reset_parameters(std::mt19937_64& rng) override { body_.reset_parameters(rng); }

  static Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
      throw ContractError("channel concat of " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const int n = a.dim(0);
    Tensor<T> out({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
    for (int i = 0; i < n; ++i) {
      T* dst = out.sample(i);
      std::copy(a.sample(i), a.sample(i) + a.stride0(), dst);
      std::copy(b.sample(i), b.sample(i) + b.stride0(), dst + a.stride0());
    }
    return out;
  }

 private:
  Sequential<T> body_;
  int in_channels_ = 0;
};

/// Total number of trainable scalars reachable from `layer`.
template <typename T>
std::size_t parameter_count(Layer<T>& layer) {
  std::vector<StateEntry<T>> entries;
  layer.collect_state("", entries);
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.trainable()) n += e.value->size();
  return n;
}

template <typename T>
void zero_grad(Layer<T>& layer) {
  std::vector<StateEntry<T>> entries;
  layer.collect_state("", entries);
  for (auto& e : entries)
    if (e.trainable()) e.grad->zero();
}

}  // namespace amtpad::nn
