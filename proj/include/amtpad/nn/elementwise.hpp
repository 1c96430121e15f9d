#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "amtpad/nn/conv.hpp"

namespace amtpad::nn {

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> y(x.shape());
    ArrayMap<T>(y.data(), y.size()) = ConstArrayMap<T>(x.data(), x.size()).max(T(0));
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    output_ = forward(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g(grad_out.shape());
    ConstArrayMap<T> out(output_.data(), output_.size());
    ArrayMap<T>(g.data(), g.size()) = (out > T(0)).select(ConstArrayMap<T>(grad_out.data(), grad_out.size()), T(0));
    output_ = Tensor<T>();
    return g;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  std::string kind() const override { return "ReLU"; }

 private:
  Tensor<T> output_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> y(x.shape());
    ArrayMap<T>(y.data(), y.size()) = ConstArrayMap<T>(x.data(), x.size()).tanh();
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    output_ = forward(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g(grad_out.shape());
    ConstArrayMap<T> out(output_.data(), output_.size());
    ArrayMap<T>(g.data(), g.size()) = ConstArrayMap<T>(grad_out.data(), grad_out.size()) * (T(1) - out.square());
    output_ = Tensor<T>();
    return g;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  std::string kind() const override { return "Tanh"; }

 private:
  Tensor<T> output_;
};

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = stable_sigmoid(v);
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    output_ = forward(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output_[i] * (T(1) - output_[i]);
    output_ = Tensor<T>();
    return g;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  std::string kind() const override { return "Sigmoid"; }

 private:
  Tensor<T> output_;
};

/// Max pooling with implicit -inf padding.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  explicit MaxPool2d(ConvGeometry geometry) : geom_(geometry) {}

  Tensor<T> forward(const Tensor<T>& x) const override { return pool(x, nullptr); }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return pool(x, &argmax_);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> gx(in_shape_);
    const std::size_t in_plane = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    const std::size_t out_plane = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
    const int planes = grad_out.dim(0) * grad_out.dim(1);
    for (int p = 0; p < planes; ++p)
      for (std::size_t k = 0; k < out_plane; ++k)
        gx[p * in_plane + argmax_[p * out_plane + k]] += grad_out[p * out_plane + k];
    argmax_.clear();
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4) throw ContractError("MaxPool2d expects rank-4 input, got " + to_string(in));
    return {in[0], in[1], geom_.out_extent(in[2]), geom_.out_extent(in[3])};
  }
  std::string kind() const override { return "MaxPool2d"; }

 private:
  Tensor<T> pool(const Tensor<T>& x, std::vector<std::size_t>* argmax) const {
    const Shape os = output_shape(x.shape());
    Tensor<T> y(os);
    const int h = x.dim(2), w = x.dim(3), oh = os[2], ow = os[3];
    const int planes = x.dim(0) * x.dim(1);
    if (argmax) argmax->assign(y.size(), 0);
    for (int p = 0; p < planes; ++p) {
      const T* in = x.data() + static_cast<std::size_t>(p) * h * w;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (int ki = 0; ki < geom_.kernel; ++ki) {
            const int r = i * geom_.stride - geom_.padding + ki;
            if (r < 0 || r >= h) continue;
            for (int kj = 0; kj < geom_.kernel; ++kj) {
              const int c = j * geom_.stride - geom_.padding + kj;
              if (c < 0 || c >= w) continue;
              const std::size_t idx = static_cast<std::size_t>(r) * w + c;
              if (in[idx] > best) {
                best = in[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t o = (static_cast<std::size_t>(p) * oh + i) * ow + j;
          y[o] = best;
          if (argmax) (*argmax)[o] = best_idx;
        }
    }
    return y;
  }

  ConvGeometry geom_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Non-overlapping average pooling (kernel == stride, no padding).
template <typename T>
class AvgPool2d final : public Layer<T> {
 public:
  explicit AvgPool2d(int kernel) : k_(kernel) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    const Shape os = output_shape(x.shape());
    Tensor<T> y(os);
    const int h = x.dim(2), w = x.dim(3), oh = os[2], ow = os[3];
    const T scale = T(1) / static_cast<T>(k_ * k_);
    for (int p = 0; p < x.dim(0) * x.dim(1); ++p) {
      const T* in = x.data() + static_cast<std::size_t>(p) * h * w;
      T* out = y.data() + static_cast<std::size_t>(p) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T s = 0;
          for (int a = 0; a < k_; ++a)
            for (int b = 0; b < k_; ++b) s += in[(i * k_ + a) * w + j * k_ + b];
          out[i * ow + j] = s * scale;
        }
    }
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> gx(in_shape_);
    const int h = in_shape_[2], w = in_shape_[3], oh = grad_out.dim(2), ow = grad_out.dim(3);
    const T scale = T(1) / static_cast<T>(k_ * k_);
    for (int p = 0; p < grad_out.dim(0) * grad_out.dim(1); ++p) {
      const T* g = grad_out.data() + static_cast<std::size_t>(p) * oh * ow;
      T* out = gx.data() + static_cast<std::size_t>(p) * h * w;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
          for (int a = 0; a < k_; ++a)
            for (int b = 0; b < k_; ++b) out[(i * k_ + a) * w + j * k_ + b] = g[i * ow + j] * scale;
    }
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4) throw ContractError("AvgPool2d expects rank-4 input, got " + to_string(in));
    return {in[0], in[1], in[2] / k_, in[3] / k_};
  }
  std::string kind() const override { return "AvgPool2d"; }

 private:
  int k_;
  Shape in_shape_;
};

/// [B, ...] -> [B, prod(...)]
template <typename T>
class Flatten final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return x.reshaped(output_shape(x.shape())); }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override { return grad_out.reshaped(in_shape_); }
  Shape output_shape(const Shape& in) const override {
    return {in[0], static_cast<int>(element_count(in) / static_cast<std::size_t>(in[0]))};
  }
  std::string kind() const override { return "Flatten"; }

 private:
  Shape in_shape_;
};

/// Fully connected map, weight layout [out, in].
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features, bool bias = true, WeightInit init = WeightInit::Normal002)
      : in_(in_features), out_(out_features), has_bias_(bias), init_(init), weight_({out_features, in_features}),
        weight_grad_(weight_.shape()) {
    if (bias) {
      bias_ = Tensor<T>({out_features});
      bias_grad_ = Tensor<T>({out_features});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const override {
    output_shape(x.shape());
    const int n = x.dim(0);
    Tensor<T> y({n, out_});
    MatrixMap<T> ymat(y.data(), n, out_);
    ymat.noalias() = ConstMatrixMap<T>(x.data(), n, in_) * ConstMatrixMap<T>(weight_.data(), out_, in_).transpose();
    if (has_bias_)
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_; ++o) ymat(i, o) += bias_[o];
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    input_ = x;
    return forward(x);
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0);
    ConstMatrixMap<T> g(grad_out.data(), n, out_);
    MatrixMap<T>(weight_grad_.data(), out_, in_).noalias() += g.transpose() * ConstMatrixMap<T>(input_.data(), n, in_);
    if (has_bias_)
      for (int o = 0; o < out_; ++o) bias_grad_[o] += g.col(o).sum();
    Tensor<T> gx({n, in_});
    MatrixMap<T>(gx.data(), n, in_).noalias() = g * ConstMatrixMap<T>(weight_.data(), out_, in_);
    input_ = Tensor<T>();
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2 || in[1] != in_)
      throw ContractError("Linear expects [B," + std::to_string(in_) + "], got " + to_string(in));
    return {in[0], out_};
  }
  std::string kind() const override { return "Linear"; }

  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_});
    if (has_bias_) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_});
  }
  void reset_parameters(std::mt19937_64& rng) override {
    detail::fill_normal(weight_, rng, init_stddev(init_, in_));
    if (has_bias_) bias_.zero();
  }

 private:
  int in_, out_;
  bool has_bias_;
  WeightInit init_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
};

/// Scales each row of a [B, D] tensor to unit Euclidean norm.
template <typename T>
class L2Normalize final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return normalize(x, nullptr); }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    output_ = normalize(x, &norms_);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0), d = grad_out.dim(1);
    Tensor<T> gx(grad_out.shape());
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int k = 0; k < d; ++k) dot += static_cast<double>(grad_out.at(i, k)) * output_.at(i, k);
      for (int k = 0; k < d; ++k)
        gx.at(i, k) = static_cast<T>((grad_out.at(i, k) - output_.at(i, k) * dot) / norms_[i]);
    }
    output_ = Tensor<T>();
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2) throw ContractError("L2Normalize expects [B,D], got " + to_string(in));
    return in;
  }
  std::string kind() const override { return "L2Normalize"; }

 private:
  Tensor<T> normalize(const Tensor<T>& x, std::vector<double>* norms) const {
    output_shape(x.shape());
    const int n = x.dim(0), d = x.dim(1);
    Tensor<T> y(x.shape());
    if (norms) norms->assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double sq = 0;
      for (int k = 0; k < d; ++k) sq += static_cast<double>(x.at(i, k)) * x.at(i, k);
      const double norm = std::max(std::sqrt(sq), 1e-12);
      for (int k = 0; k < d; ++k) y.at(i, k) = static_cast<T>(x.at(i, k) / norm);
      if (norms) (*norms)[i] = norm;
    }
    return y;
  }

  Tensor<T> output_;
  std::vector<double> norms_;
};

}  // namespace amtpad::nn
