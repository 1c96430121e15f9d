#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "amtpad/image.hpp"

namespace amtpad {

/// The two gravitational-force kernels. Entries are indexed by the offset
/// (p, q) from the centre: p along columns, q along rows.
struct PlgfMasks {
  int size = 0;
  std::vector<double> mask_x;
  std::vector<double> mask_y;

  int radius() const noexcept { return size / 2; }
  double x(int p, int q) const { return mask_x[index(p, q)]; }
  double y(int p, int q) const { return mask_y[index(p, q)]; }

 private:
  std::size_t index(int p, int q) const {
    const int r = radius();
    if (p < -r || p > r || q < -r || q > r) throw std::out_of_range("mask offset outside kernel");
    return static_cast<std::size_t>(q + r) * size + (p + r);
  }
};

/// mask_x(p,q) = cos(atan2(q,p)) / (p²+q²) = p / (p²+q²)^{3/2}, and the
/// analogous sine form for mask_y; both are 0 at the centre.
inline PlgfMasks build_plgf_masks(int size = 5) {
  if (size < 3 || size % 2 == 0) throw std::invalid_argument("PLGF mask size must be odd and >= 3");
  PlgfMasks m;
  m.size = size;
  m.mask_x.assign(static_cast<std::size_t>(size) * size, 0.0);
  m.mask_y.assign(m.mask_x.size(), 0.0);
  const int r = size / 2;
  // Evaluated on |p|, |q| and signed afterwards so the symmetries are exact.
  for (int q = -r; q <= r; ++q)
    for (int p = -r; p <= r; ++p) {
      if (p == 0 && q == 0) continue;
      const double d2 = static_cast<double>(p * p + q * q);
      const double angle = std::atan2(static_cast<double>(std::abs(q)), static_cast<double>(std::abs(p)));
      const std::size_t k = static_cast<std::size_t>(q + r) * size + (p + r);
      m.mask_x[k] = p == 0 ? 0.0 : (p > 0 ? 1.0 : -1.0) * std::cos(angle) / d2;
      m.mask_y[k] = q == 0 ? 0.0 : (q > 0 ? 1.0 : -1.0) * std::sin(angle) / d2;
    }
  return m;
}

/// Index into [0, n) under reflect-101 padding (…2 1 | 0 1 2 … n-1 | n-2 …).
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// True 2-D convolution of `img` with a point-antisymmetric square kernel
/// (k(-p,-q) = -k(p,q)) laid out like PlgfMasks (row = q + r, column = p + r),
/// reflect-101 boundary. Each tap is paired with its mirror tap, so a locally
/// constant image gives exactly zero.
inline GrayImage convolve_antisymmetric(const GrayImage& img, const std::vector<double>& kernel, int size) {
  const int r = size / 2;
  auto at = [&](int p, int q) { return kernel[static_cast<std::size_t>(q + r) * size + (p + r)]; };
  for (int q = -r; q <= r; ++q)
    for (int p = -r; p <= r; ++p)
      if (at(-p, -q) != -at(p, q)) throw std::invalid_argument("kernel is not point-antisymmetric");
  GrayImage out(img.height, img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      double acc = 0.0;
      // half-plane q > 0, plus q = 0 with p > 0
      for (int q = 0; q <= r; ++q)
        for (int p = q == 0 ? 1 : -r; p <= r; ++p) {
          const double k = at(p, q);
          if (k == 0.0) continue;
          const double fwd = img.at(reflect101(i - q, img.height), reflect101(j - p, img.width));
          const double bwd = img.at(reflect101(i + q, img.height), reflect101(j + p, img.width));
          acc += k * (fwd - bwd);
        }
      out.at(i, j) = acc;
    }
  return out;
}

/// PLGF descriptor: atan(sqrt(((I∗Mx)/(I+ε))² + ((I∗My)/(I+ε))²)), in [0, π/2).
inline GrayImage plgf_transform(const GrayImage& img, const PlgfMasks& masks, double epsilon = 1e-6) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("PLGF epsilon must be positive");
  for (double v : img.pixels)
    if (!(v >= 0.0)) throw std::invalid_argument("PLGF input must be non-negative and finite");
  const GrayImage gx = convolve_antisymmetric(img, masks.mask_x, masks.size);
  const GrayImage gy = convolve_antisymmetric(img, masks.mask_y, masks.size);
  constexpr double kUpper = std::numbers::pi / 2;
  const double below_upper = std::nextafter(kUpper, 0.0);
  GrayImage out(img.height, img.width);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double denom = img.pixels[k] + epsilon;
    const double v = std::atan(std::hypot(gx.pixels[k] / denom, gy.pixels[k] / denom));
    out.pixels[k] = std::min(v, below_upper);
  }
  return out;
}

/// Which modalities of a pair are illumination-sensitive and get the PLGF.
struct ModalityInConfig {
  bool source_plgf = true;
  bool target_plgf = true;
  double epsilon = 1e-6;
  int mask_size = 5;
  /// Multiply the descriptor by 2/π so it lands in [0, 1).
  bool rescale_to_unit = true;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("modality IN epsilon must be positive");
    if (mask_size < 3 || mask_size % 2 == 0) throw std::invalid_argument("PLGF mask size must be odd and >= 3");
  }
};

/// PLGF (optionally rescaled) of a single image.
inline GrayImage plgf_normalize(const GrayImage& img, const ModalityInConfig& cfg) {
  GrayImage out = plgf_transform(img, build_plgf_masks(cfg.mask_size), cfg.epsilon);
  if (cfg.rescale_to_unit)
    for (auto& v : out.pixels) v *= 2.0 / std::numbers::pi;
  return out;
}

/// Replaces each modality image by its descriptor iff its flag is set.
inline BiModalSample normalize_sample(BiModalSample sample, const ModalityInConfig& cfg) {
  cfg.validate();
  if (cfg.source_plgf) sample.source = plgf_normalize(sample.source, cfg);
  if (cfg.target_plgf) sample.target = plgf_normalize(sample.target, cfg);
  return sample;
}

}  // namespace amtpad
