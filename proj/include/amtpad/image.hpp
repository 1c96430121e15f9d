#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/tensor.hpp"

namespace amtpad {

/// Single-channel image with real intensities, row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("negative image extent");
  }

  double& at(int r, int c) noexcept { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const noexcept { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const noexcept { return pixels.size(); }
  bool empty() const noexcept { return pixels.empty(); }

  bool all_finite() const {
    return std::all_of(pixels.begin(), pixels.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

enum class Subset { Train, Dev, Test };

inline std::string to_string(Subset s) {
  switch (s) {
    case Subset::Train: return "train";
    case Subset::Dev: return "dev";
    case Subset::Test: return "test";
  }
  return "?";
}

inline Subset parse_subset(const std::string& s) {
  if (s == "train") return Subset::Train;
  if (s == "dev") return Subset::Dev;
  if (s == "test") return Subset::Test;
  throw std::invalid_argument("unknown subset '" + s + "'");
}

/// A synchronously captured source/target pair with its labels.
/// label 0 = genuine, 1 = attack; attack_type is set iff label = 1.
struct BiModalSample {
  std::string sample_id;
  GrayImage source;
  GrayImage target;
  int label = 0;
  std::optional<std::string> attack_type;
  std::optional<std::string> illumination_id;
  Subset subset = Subset::Train;
};

/// Packs images into a [B,1,H,W] tensor; all images must share one size.
template <typename T>
Tensor<T> to_tensor(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw ContractError("to_tensor needs at least one image");
  const int h = images.front()->height, w = images.front()->width;
  Tensor<T> out({static_cast<int>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->height != h || images[i]->width != w) throw ContractError("images in a batch differ in size");
    std::transform(images[i]->pixels.begin(), images[i]->pixels.end(), out.sample(static_cast<int>(i)),
                   [](double v) { return static_cast<T>(v); });
  }
  return out;
}

/// Sample `n` of a [B,1,H,W] tensor as an image.
template <typename T>
GrayImage image_from_tensor(const Tensor<T>& t, int n) {
  expect_shape(t, {-1, 1, -1, -1}, "image_from_tensor");
  GrayImage img(t.dim(2), t.dim(3));
  std::copy(t.sample(n), t.sample(n) + img.size(), img.pixels.begin());
  return img;
}

}  // namespace amtpad
