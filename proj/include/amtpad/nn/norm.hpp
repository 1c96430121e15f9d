#pragma once

#include <cmath>

#include "amtpad/nn/conv.hpp"

namespace amtpad::nn {

/// Instance normalisation without affine parameters: every (sample, channel)
/// plane is shifted to zero mean and scaled to unit (biased) variance.
template <typename T>
class InstanceNorm2d final : public Layer<T> {
 public:
  explicit InstanceNorm2d(int channels, double eps = 1e-5) : channels_(channels), eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    Tensor<T> y(x.shape());
    normalize(x, y, nullptr);
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    inv_std_.assign(static_cast<std::size_t>(x.dim(0)) * x.dim(1), T(0));
    normalize(x, y, inv_std_.data());
    output_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int planes = grad_out.dim(0) * grad_out.dim(1);
    const Eigen::Index hw = static_cast<Eigen::Index>(grad_out.dim(2)) * grad_out.dim(3);
    Tensor<T> gx(grad_out.shape());
    for (int p = 0; p < planes; ++p) {
      ConstArrayMap<T> g(grad_out.data() + p * hw, hw);
      ConstArrayMap<T> xh(output_.data() + p * hw, hw);
      const T mean_g = g.mean();
      const T mean_gx = (g * xh).mean();
      ArrayMap<T>(gx.data() + p * hw, hw) = inv_std_[p] * (g - mean_g - xh * mean_gx);
    }
    output_ = Tensor<T>();
    return gx;
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != channels_)
      throw ContractError("InstanceNorm2d expects [B," + std::to_string(channels_) + ",H,W], got " + to_string(in));
    return in;
  }
  std::string kind() const override { return "InstanceNorm2d"; }

 private:
  void normalize(const Tensor<T>& x, Tensor<T>& y, T* inv_std_out) const {
    output_shape(x.shape());
    const int planes = x.dim(0) * x.dim(1);
    const Eigen::Index hw = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
    for (int p = 0; p < planes; ++p) {
      ConstArrayMap<T> in(x.data() + p * hw, hw);
      const T mean = in.mean();
      const T var = (in - mean).square().mean();
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
      ArrayMap<T>(y.data() + p * hw, hw) = (in - mean) * inv;
      if (inv_std_out) inv_std_out[p] = inv;
    }
  }

  int channels_;
  double eps_;
  std::vector<T> inv_std_;
  Tensor<T> output_;
};

/// Batch normalisation with affine scale/shift and running statistics
/// (momentum 0.1, unbiased running variance).
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum), gamma_({channels}, T(1)), beta_({channels}),
        gamma_grad_({channels}), beta_grad_({channels}), running_mean_({channels}),
        running_var_({channels}, T(1)) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    output_shape(x.shape());
    Tensor<T> y(x.shape());
    const int n = x.dim(0);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
      const double scale = gamma_[c] * inv, shift = beta_[c] - running_mean_[c] * scale;
      for (int i = 0; i < n; ++i) {
        const T* in = x.sample(i) + c * hw;
        T* out = y.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) out[k] = static_cast<T>(in[k] * scale + shift);
      }
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) override {
    output_shape(x.shape());
    const int n = x.dim(0);
    const Eigen::Index hw = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
    const double count = static_cast<double>(n) * hw;
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, 0.0);
    Tensor<T> y(x.shape());
    for (int c = 0; c < channels_; ++c) {
      double mean = 0;
      for (int i = 0; i < n; ++i) mean += ConstArrayMap<T>(x.sample(i) + c * hw, hw).template cast<double>().sum();
      mean /= count;
      double var = 0;
      for (int i = 0; i < n; ++i)
        var += (ConstArrayMap<T>(x.sample(i) + c * hw, hw).template cast<double>() - mean).square().sum();
      var /= count;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      for (int i = 0; i < n; ++i) {
        ConstArrayMap<T> in(x.sample(i) + c * hw, hw);
        ArrayMap<T> xh(xhat_.sample(i) + c * hw, hw);
        xh = (in - static_cast<T>(mean)) * static_cast<T>(inv);
        ArrayMap<T>(y.sample(i) + c * hw, hw) = gamma_[c] * xh + beta_[c];
      }
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const int n = grad_out.dim(0);
    const Eigen::Index hw = static_cast<Eigen::Index>(grad_out.dim(2)) * grad_out.dim(3);
    const double count = static_cast<double>(n) * hw;
    Tensor<T> gx(grad_out.shape());
    for (int c = 0; c < channels_; ++c) {
      double sum_g = 0, sum_gx = 0;
      for (int i = 0; i < n; ++i) {
        ConstArrayMap<T> g(grad_out.sample(i) + c * hw, hw);
        ConstArrayMap<T> xh(xhat_.sample(i) + c * hw, hw);
        sum_g += g.template cast<double>().sum();
        sum_gx += (g.template cast<double>() * xh.template cast<double>()).sum();
      }
      gamma_grad_[c] += static_cast<T>(sum_gx);
      beta_grad_[c] += static_cast<T>(sum_g);
      const T scale = static_cast<T>(gamma_[c] * inv_std_[c]);
      const T mean_g = static_cast<T>(sum_g / count), mean_gx = static_cast<T>(sum_gx / count);
      for (int i = 0; i < n; ++i) {
        ConstArrayMap<T> g(grad_out.sample(i) + c * hw, hw);
        ConstArrayMap<T> xh(xhat_.sample(i) + c * hw, hw);
        ArrayMap<T>(gx.sample(i) + c * hw, hw) = scale * (g - mean_g - xh * mean_gx);
      }
    }
    xhat_ = Tensor<T>();
    return gx;
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != channels_)
      throw ContractError("BatchNorm2d expects [B," + std::to_string(channels_) + ",H,W], got " + to_string(in));
    return in;
  }
  std::string kind() const override { return "BatchNorm2d"; }

  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &gamma_, &gamma_grad_});
    out.push_back({join_name(prefix, "bias"), &beta_, &beta_grad_});
    out.push_back({join_name(prefix, "running_mean"), &running_mean_, nullptr});
    out.push_back({join_name(prefix, "running_var"), &running_var_, nullptr});
  }
  void reset_parameters(std::mt19937_64&) override {
    gamma_.fill(T(1));
    beta_.zero();
    running_mean_.zero();
    running_var_.fill(T(1));
  }

 private:
  int channels_;
  double eps_, momentum_;
  Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

}  // namespace amtpad::nn
