#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "amtpad/nn/conv.hpp"
#include "amtpad/nn/elementwise.hpp"
#include "amtpad/nn/norm.hpp"

namespace amtpad {

/// Side length of every image entering the networks.
inline constexpr int kImageSize = 128;

/// Architecture of the asymmetric modality translator. The defaults are the
/// full-size network (encoder/decoder 64-128-256 wide, nine residual blocks).
struct TranslatorConfig {
  int input_channels = 1;
  int base_width = 64;
  int latent_channels = 256;
  int n_translation_blocks = 9;
  bool with_translation_block = true;
  int projector_width = 64;
  int embedding_dim = 128;

  int latent_size() const { return kImageSize / 4; }

  void validate() const {
    if (input_channels <= 0 || base_width <= 0 || latent_channels <= 0 || projector_width <= 0)
      throw std::invalid_argument("translator widths must be positive");
    if (n_translation_blocks < 0) throw std::invalid_argument("n_translation_blocks must be >= 0");
    if (embedding_dim <= 0) throw std::invalid_argument("embedding_dim must be positive");
  }
};

template <typename T>
struct TranslatorOutput {
  Tensor<T> translated;  ///< [B,1,128,128] in (-1, 1)
  Tensor<T> embedding;   ///< [B,D] unit rows; empty when the projector is off
};

/// Encoder -> residual translation blocks -> decoder, plus a projector head
/// on the translated latent that is only used while training.
///
/// Convolutions that feed an instance norm carry no bias: the norm removes any
/// per-channel constant, so such a bias would never receive gradient.
template <typename T>
class Translator {
 public:
  explicit Translator(TranslatorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    using namespace nn;
    const int w = cfg_.base_width, mid = 2 * cfg_.base_width, lat = cfg_.latent_channels;

    auto first = std::make_unique<Conv2d<T>>(cfg_.input_channels, w, ConvGeometry{7, 1, 3}, false);
    first->set_propagate_input_grad(false);
    encoder_.add(std::move(first));
    encoder_.add(std::make_unique<InstanceNorm2d<T>>(w));
    encoder_.add(std::make_unique<ReLU<T>>());
    encoder_.add(std::make_unique<Conv2d<T>>(w, mid, ConvGeometry{3, 2, 1}, false));
    encoder_.add(std::make_unique<InstanceNorm2d<T>>(mid));
    encoder_.add(std::make_unique<ReLU<T>>());
    encoder_.add(std::make_unique<Conv2d<T>>(mid, lat, ConvGeometry{3, 2, 1}, false));
    encoder_.add(std::make_unique<InstanceNorm2d<T>>(lat));
    encoder_.add(std::make_unique<ReLU<T>>());

    for (int b = 0; b < cfg_.n_translation_blocks; ++b) {
      Sequential<T> body;
      body.add(std::make_unique<Conv2d<T>>(lat, lat, ConvGeometry{3, 1, 1}, false));
      body.add(std::make_unique<InstanceNorm2d<T>>(lat));
      body.add(std::make_unique<ReLU<T>>());
      body.add(std::make_unique<Conv2d<T>>(lat, lat, ConvGeometry{3, 1, 1}, false));
      body.add(std::make_unique<InstanceNorm2d<T>>(lat));
      blocks_.add(std::make_unique<Residual<T>>(std::move(body)));
    }

    decoder_.add(std::make_unique<ConvTranspose2d<T>>(lat, mid, ConvGeometry{3, 2, 1}, 1, false));
    decoder_.add(std::make_unique<InstanceNorm2d<T>>(mid));
    decoder_.add(std::make_unique<ReLU<T>>());
    decoder_.add(std::make_unique<ConvTranspose2d<T>>(mid, w, ConvGeometry{3, 2, 1}, 1, false));
    decoder_.add(std::make_unique<InstanceNorm2d<T>>(w));
    decoder_.add(std::make_unique<ReLU<T>>());
    decoder_.add(std::make_unique<Conv2d<T>>(w, 1, ConvGeometry{7, 1, 3}, true));
    decoder_.add(std::make_unique<Tanh<T>>());

    const int ls = cfg_.latent_size();
    projector_.add(std::make_unique<Conv2d<T>>(lat, cfg_.projector_width, ConvGeometry{3, 1, 1}, false));
    projector_.add(std::make_unique<InstanceNorm2d<T>>(cfg_.projector_width));
    projector_.add(std::make_unique<ReLU<T>>());
    projector_.add(std::make_unique<Conv2d<T>>(cfg_.projector_width, 1, ConvGeometry{1, 1, 0}, false));
    projector_.add(std::make_unique<InstanceNorm2d<T>>(1));
    projector_.add(std::make_unique<ReLU<T>>());
    projector_.add(std::make_unique<Flatten<T>>());
    projector_.add(std::make_unique<Linear<T>>(ls * ls, cfg_.embedding_dim, true));
    projector_.add(std::make_unique<L2Normalize<T>>());
  }

  const TranslatorConfig& config() const noexcept { return cfg_; }

  void reset_parameters(std::mt19937_64& rng) {
    encoder_.reset_parameters(rng);
    blocks_.reset_parameters(rng);
    decoder_.reset_parameters(rng);
    projector_.reset_parameters(rng);
  }

  Shape image_shape(int batch) const { return {batch, cfg_.input_channels, kImageSize, kImageSize}; }
  Shape latent_shape(int batch) const {
    return {batch, cfg_.latent_channels, cfg_.latent_size(), cfg_.latent_size()};
  }

  Tensor<T> encode(const Tensor<T>& img) const {
    expect_shape(img, image_shape(-1), "encode");
    return encoder_.forward(img);
  }
  Tensor<T> translate_latent(const Tensor<T>& latent) const {
    expect_shape(latent, latent_shape(-1), "translate_latent");
    return blocks_.forward(latent);
  }
  Tensor<T> decode(const Tensor<T>& latent) const {
    expect_shape(latent, latent_shape(-1), "decode");
    return decoder_.forward(latent);
  }
  Tensor<T> project(const Tensor<T>& latent) const {
    expect_shape(latent, latent_shape(-1), "project");
    return projector_.forward(latent);
  }

  /// Inference path: translated image only.
  Tensor<T> translate(const Tensor<T>& img) const {
    Tensor<T> z = encode(img);
    if (cfg_.with_translation_block) z = blocks_.forward(z);
    return decoder_.forward(z);
  }

  /// Training path. The projector runs only when `with_projector` is set.
  TranslatorOutput<T> forward_train(const Tensor<T>& img, bool with_projector) {
    expect_shape(img, image_shape(-1), "translator input");
    Tensor<T> z = encoder_.forward_train(img);
    if (cfg_.with_translation_block) z = blocks_.forward_train(z);
    TranslatorOutput<T> out;
    out.translated = decoder_.forward_train(z);
    projector_active_ = with_projector;
    if (with_projector) out.embedding = projector_.forward_train(z);
    return out;
  }

  /// Backpropagates the gradients of the two heads into the parameter
  /// gradients. The gradient with respect to the input image is not formed.
  void backward(const Tensor<T>& grad_translated, const Tensor<T>* grad_embedding) {
    Tensor<T> g = decoder_.backward(grad_translated);
    if (projector_active_) {
      if (grad_embedding == nullptr) throw ContractError("projector was active but no embedding gradient given");
      g += projector_.backward(*grad_embedding);
    }
    if (cfg_.with_translation_block) g = blocks_.backward(g);
    encoder_.backward(g);
  }

  nn::Sequential<T>& encoder() noexcept { return encoder_; }
  nn::Sequential<T>& blocks() noexcept { return blocks_; }
  nn::Sequential<T>& decoder() noexcept { return decoder_; }
  nn::Sequential<T>& projector() noexcept { return projector_; }

  void collect_state(const std::string& prefix, std::vector<nn::StateEntry<T>>& out) {
    encoder_.collect_state(nn::join_name(prefix, "encoder"), out);
    blocks_.collect_state(nn::join_name(prefix, "blocks"), out);
    decoder_.collect_state(nn::join_name(prefix, "decoder"), out);
    projector_.collect_state(nn::join_name(prefix, "projector"), out);
  }

 private:
  TranslatorConfig cfg_;
  nn::Sequential<T> encoder_, blocks_, decoder_, projector_;
  bool projector_active_ = false;
};

/// Affine maps between stored intensities in [0,1] and the network range [-1,1].
template <typename T>
Tensor<T> to_network_range(Tensor<T> img) {
  for (auto& v : img.values()) v = T(2) * v - T(1);
  return img;
}
template <typename T>
Tensor<T> from_network_range(Tensor<T> img) {
  for (auto& v : img.values()) v = (v + T(1)) / T(2);
  return img;
}

}  // namespace amtpad
