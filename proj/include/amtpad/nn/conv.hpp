#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "amtpad/nn/layer.hpp"

namespace amtpad::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

/// Geometry of a square-kernel 2-D convolution.
struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  int out_extent(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

namespace detail {

/// Range of output columns [lo, hi) whose input column ow*stride + offset
/// lies inside [0, width).
inline std::pair<int, int> valid_span(int out_w, int width, int stride, int offset) {
  int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int hi = width - 1 - offset < 0 ? 0 : (width - 1 - offset) / stride + 1;
  hi = std::min(hi, out_w);
  lo = std::min(lo, hi);
  return {lo, hi};
}

/// Unfolds one CHW image into a (C*k*k) x (Ho*Wo) column matrix (zero padding).
template <typename T>
void im2col(const T* img, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            T* col) {
  const int k = g.kernel, s = g.stride;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * out_h * out_w;
        const int offset = kj - g.padding;
        const auto [lo, hi] = valid_span(out_w, width, s, offset);
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * s - g.padding + ki;
          T* dst = row + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * width + offset;
          std::fill(dst, dst + lo, T(0));
          if (s == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow) dst[ow] = src[ow * s];
          }
          std::fill(dst + hi, dst + out_w, T(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back into a CHW image.
template <typename T>
void col2im(const T* col, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            T* img) {
  const int k = g.kernel, s = g.stride;
  std::fill(img, img + static_cast<std::size_t>(channels) * height * width, T(0));
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * out_h * out_w;
        const int offset = kj - g.padding;
        const auto [lo, hi] = valid_span(out_w, width, s, offset);
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * s - g.padding + ki;
          if (ih < 0 || ih >= height) continue;
          const T* src = row + static_cast<std::size_t>(oh) * out_w;
          T* dst = plane + static_cast<std::size_t>(ih) * width + offset;
          if (s == 1) {
            for (int ow = lo; ow < hi; ++ow) dst[ow] += src[ow];
          } else {
            for (int ow = lo; ow < hi; ++ow) dst[ow * s] += src[ow];
          }
        }
      }
    }
  }
}

/// Visits every (input row segment, output row segment) pair of a stride-1
/// convolution for kernel tap (ki, kj): f(in_ptr, out_ptr, length).
template <typename F>
void for_each_tap_row(int height, int width, const ConvGeometry& g, int out_h, int out_w, int ki, int kj, F&& f) {
  const int offset = kj - g.padding;
  const auto [lo, hi] = valid_span(out_w, width, 1, offset);
  if (hi <= lo) return;
  for (int oh = 0; oh < out_h; ++oh) {
    const int ih = oh - g.padding + ki;
    if (ih < 0 || ih >= height) continue;
    f(static_cast<std::size_t>(ih) * width + offset + lo, static_cast<std::size_t>(oh) * out_w + lo, hi - lo);
  }
}

template <typename T>
void fill_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace detail

/// How freshly constructed weights are drawn.
enum class WeightInit {
  Normal002,      ///< N(0, 0.02), image-translation convention
  KaimingNormal,  ///< N(0, sqrt(2 / fan_in))
};

inline double init_stddev(WeightInit init, int fan_in) {
  return init == WeightInit::Normal002 ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
}

/// 2-D convolution, weight layout [out, in, k, k].
///
/// Stride-1 convolutions with very few output channels run as direct
/// shift-and-accumulate loops; everything else goes through im2col + GEMM.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, ConvGeometry geometry, bool bias,
         WeightInit init = WeightInit::Normal002)
      : in_(in_channels), out_(out_channels), geom_(geometry), has_bias_(bias), init_(init),
        weight_({out_channels, in_channels, geometry.kernel, geometry.kernel}),
        weight_grad_(weight_.shape()) {
    if (bias) {
      bias_ = Tensor<T>({out_channels});
      bias_grad_ = Tensor<T>({out_channels});
    }
  }

  Tensor<T>& weight() noexcept { return weight_; }
  Tensor<T>& bias() noexcept { return bias_; }
  const ConvGeometry& geometry() const noexcept { return geom_; }

  /// When false, backward() skips the input gradient and returns an empty tensor.
  void set_propagate_input_grad(bool on) noexcept { propagate_input_grad_ = on; }

  Tensor<T> forward(const Tensor<T>& x) const override {
    check_input(x);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = geom_.out_extent(h), ow = geom_.out_extent(w);
    const int kdim = in_ * geom_.kernel * geom_.kernel, pix = oh * ow;
    Tensor<T> y({n, out_, oh, ow});
    if (use_direct()) {
      direct_forward(x, y);
    } else {
      AlignedVector<T> col(geom_.is_pointwise() ? 0 : static_cast<std::size_t>(kdim) * pix);
      ConstMatrixMap<T> wmat(weight_.data(), out_, kdim);
      for (int i = 0; i < n; ++i) {
        const T* colp = x.sample(i);
        if (!geom_.is_pointwise()) {
          detail::im2col(x.sample(i), in_, h, w, geom_, oh, ow, col.data());
          colp = col.data();
        }
        MatrixMap<T>(y.sample(i), out_, pix).noalias() = wmat * ConstMatrixMap<T>(colp, kdim, pix);
      }
    }
    if (has_bias_) {
      for (int i = 0; i < n; ++i) {
        MatrixMap<T> ymat(y.sample(i), out_, pix);
        for (int c = 0; c < out_; ++c) ymat.row(c).array() += bias_[c];
      }
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) override {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Tensor<T>& x = input_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    const int kdim = in_ * geom_.kernel * geom_.kernel, pix = oh * ow;
    Tensor<T> gx = propagate_input_grad_ ? Tensor<T>(x.shape()) : Tensor<T>();
    if (has_bias_) {
      for (int i = 0; i < n; ++i) {
        ConstMatrixMap<T> gy(grad_out.sample(i), out_, pix);
        for (int c = 0; c < out_; ++c) bias_grad_[c] += gy.row(c).sum();
      }
    }
    if (use_direct()) {
      direct_backward(x, grad_out, gx);
      input_ = Tensor<T>();
      return gx;
    }
    AlignedVector<T> col(geom_.is_pointwise() ? 0 : static_cast<std::size_t>(kdim) * pix);
    AlignedVector<T> gcol(propagate_input_grad_ && !geom_.is_pointwise() ? static_cast<std::size_t>(kdim) * pix : 0);
    ConstMatrixMap<T> wmat(weight_.data(), out_, kdim);
    MatrixMap<T> gw(weight_grad_.data(), out_, kdim);
    for (int i = 0; i < n; ++i) {
      ConstMatrixMap<T> gy(grad_out.sample(i), out_, pix);
      const T* colp = x.sample(i);
      if (!geom_.is_pointwise()) {
        detail::im2col(x.sample(i), in_, h, w, geom_, oh, ow, col.data());
        colp = col.data();
      }
      gw.noalias() += gy * ConstMatrixMap<T>(colp, kdim, pix).transpose();
      if (!propagate_input_grad_) continue;
      if (geom_.is_pointwise()) {
        MatrixMap<T>(gx.sample(i), kdim, pix).noalias() = wmat.transpose() * gy;
      } else {
        MatrixMap<T>(gcol.data(), kdim, pix).noalias() = wmat.transpose() * gy;
        detail::col2im(gcol.data(), in_, h, w, geom_, oh, ow, gx.sample(i));
      }
    }
    input_ = Tensor<T>();
    return gx;
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != in_)
      throw ContractError("Conv2d expects [B," + std::to_string(in_) + ",H,W], got " + to_string(in));
    return {in[0], out_, geom_.out_extent(in[2]), geom_.out_extent(in[3])};
  }
  std::string kind() const override { return "Conv2d"; }

  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_});
    if (has_bias_) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_});
  }
  void reset_parameters(std::mt19937_64& rng) override {
    detail::fill_normal(weight_, rng, init_stddev(init_, in_ * geom_.kernel * geom_.kernel));
    if (has_bias_) bias_.zero();
  }

 private:
  bool use_direct() const noexcept { return geom_.stride == 1 && geom_.kernel > 1 && out_ <= 2; }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != in_)
      throw ContractError("Conv2d expects [B," + std::to_string(in_) + ",H,W], got " + to_string(x.shape()));
  }

  T tap(int o, int c, int ki, int kj) const {
    return weight_[((static_cast<std::size_t>(o) * in_ + c) * geom_.kernel + ki) * geom_.kernel + kj];
  }

  void direct_forward(const Tensor<T>& x, Tensor<T>& y) const {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3), oh = y.dim(2), ow = y.dim(3);
    const std::size_t in_plane = static_cast<std::size_t>(h) * w, out_plane = static_cast<std::size_t>(oh) * ow;
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) {
        T* yp = y.sample(i) + o * out_plane;
        for (int c = 0; c < in_; ++c) {
          const T* xp = x.sample(i) + c * in_plane;
          for (int ki = 0; ki < geom_.kernel; ++ki)
            for (int kj = 0; kj < geom_.kernel; ++kj) {
              const T wv = tap(o, c, ki, kj);
              detail::for_each_tap_row(h, w, geom_, oh, ow, ki, kj, [&](std::size_t xi, std::size_t yi, int len) {
                ArrayMap<T>(yp + yi, len) += wv * ConstArrayMap<T>(xp + xi, len);
              });
            }
        }
      }
  }

  void direct_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3), oh = gy.dim(2), ow = gy.dim(3);
    const std::size_t in_plane = static_cast<std::size_t>(h) * w, out_plane = static_cast<std::size_t>(oh) * ow;
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) {
        const T* gp = gy.sample(i) + o * out_plane;
        for (int c = 0; c < in_; ++c) {
          const T* xp = x.sample(i) + c * in_plane;
          T* gxp = propagate_input_grad_ ? gx.sample(i) + c * in_plane : nullptr;
          for (int ki = 0; ki < geom_.kernel; ++ki)
            for (int kj = 0; kj < geom_.kernel; ++kj) {
              const T wv = tap(o, c, ki, kj);
              T acc = 0;
              detail::for_each_tap_row(h, w, geom_, oh, ow, ki, kj, [&](std::size_t xi, std::size_t yi, int len) {
                ConstArrayMap<T> g(gp + yi, len);
                acc += (g * ConstArrayMap<T>(xp + xi, len)).sum();
                if (gxp) ArrayMap<T>(gxp + xi, len) += wv * g;
              });
              weight_grad_[((static_cast<std::size_t>(o) * in_ + c) * geom_.kernel + ki) * geom_.kernel + kj] += acc;
            }
        }
      }
  }

  int in_, out_;
  ConvGeometry geom_;
  bool has_bias_;
  WeightInit init_;
  bool propagate_input_grad_ = true;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
};

/// Transposed convolution (the adjoint of Conv2d), weight layout [in, out, k, k].
/// Output extent: (in - 1) * stride - 2 * padding + kernel + output_padding.
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, ConvGeometry geometry, int output_padding, bool bias,
                  WeightInit init = WeightInit::Normal002)
      : in_(in_channels), out_(out_channels), geom_(geometry), output_padding_(output_padding),
        has_bias_(bias), init_(init), weight_({in_channels, out_channels, geometry.kernel, geometry.kernel}),
        weight_grad_(weight_.shape()) {
    if (bias) {
      bias_ = Tensor<T>({out_channels});
      bias_grad_ = Tensor<T>({out_channels});
    }
  }

  Tensor<T>& weight() noexcept { return weight_; }

  int out_extent(int in) const { return (in - 1) * geom_.stride - 2 * geom_.padding + geom_.kernel + output_padding_; }

  Tensor<T> forward(const Tensor<T>& x) const override {
    check_input(x);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_extent(h), ow = out_extent(w);
    const int kdim = out_ * geom_.kernel * geom_.kernel, pix = h * w;
    Tensor<T> y({n, out_, oh, ow});
    AlignedVector<T> col(static_cast<std::size_t>(kdim) * pix);
    ConstMatrixMap<T> wmat(weight_.data(), in_, kdim);
    for (int i = 0; i < n; ++i) {
      MatrixMap<T>(col.data(), kdim, pix).noalias() = wmat.transpose() * ConstMatrixMap<T>(x.sample(i), in_, pix);
      detail::col2im(col.data(), out_, oh, ow, geom_, h, w, y.sample(i));
      if (has_bias_) {
        MatrixMap<T> ymat(y.sample(i), out_, oh * ow);
        for (int c = 0; c < out_; ++c) ymat.row(c).array() += bias_[c];
      }
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) override {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Tensor<T>& x = input_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    const int kdim = out_ * geom_.kernel * geom_.kernel, pix = h * w;
    Tensor<T> gx(x.shape());
    AlignedVector<T> col(static_cast<std::size_t>(kdim) * pix);
    ConstMatrixMap<T> wmat(weight_.data(), in_, kdim);
    MatrixMap<T> gw(weight_grad_.data(), in_, kdim);
    for (int i = 0; i < n; ++i) {
      detail::im2col(grad_out.sample(i), out_, oh, ow, geom_, h, w, col.data());
      ConstMatrixMap<T> cmat(col.data(), kdim, pix);
      gw.noalias() += ConstMatrixMap<T>(x.sample(i), in_, pix) * cmat.transpose();
      MatrixMap<T>(gx.sample(i), in_, pix).noalias() = wmat * cmat;
      if (has_bias_) {
        ConstMatrixMap<T> gy(grad_out.sample(i), out_, oh * ow);
        for (int c = 0; c < out_; ++c) bias_grad_[c] += gy.row(c).sum();
      }
    }
    input_ = Tensor<T>();
    return gx;
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != in_)
      throw ContractError("ConvTranspose2d expects [B," + std::to_string(in_) + ",H,W], got " + to_string(in));
    return {in[0], out_, out_extent(in[2]), out_extent(in[3])};
  }
  std::string kind() const override { return "ConvTranspose2d"; }

  void collect_state(const std::string& prefix, std::vector<StateEntry<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_});
    if (has_bias_) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_});
  }
  void reset_parameters(std::mt19937_64& rng) override {
    detail::fill_normal(weight_, rng, init_stddev(init_, out_ * geom_.kernel * geom_.kernel));
    if (has_bias_) bias_.zero();
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != in_)
      throw ContractError("ConvTranspose2d expects [B," + std::to_string(in_) + ",H,W], got " +
                          to_string(x.shape()));
  }

  int in_, out_;
  ConvGeometry geom_;
  int output_padding_;
  bool has_bias_;
  WeightInit init_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
};

}  // namespace amtpad::nn
