#pragma once

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "amtpad/nn/conv.hpp"
#include "amtpad/nn/elementwise.hpp"
#include "amtpad/nn/norm.hpp"
#include "amtpad/translator.hpp"

namespace amtpad {

enum class FusionOp { Concat, Subtract };

inline std::string to_string(FusionOp op) { return op == FusionOp::Concat ? "concat" : "subtract"; }

inline FusionOp parse_fusion_op(const std::string& s) {
  if (s == "concat") return FusionOp::Concat;
  if (s == "subtract") return FusionOp::Subtract;
  throw std::invalid_argument("unknown fusion op '" + s + "' (expected concat or subtract)");
}

namespace detail {
template <typename T>
void check_fusion_inputs(const Tensor<T>& translated, const Tensor<T>& target) {
  expect_shape(translated, {-1, 1, -1, -1}, "fusion input (translated)");
  if (target.shape() != translated.shape())
    throw ContractError("fusion inputs differ in shape: " + to_string(translated.shape()) + " vs " +
                        to_string(target.shape()));
}
}  // namespace detail

/// Channel 0 = translated image, channel 1 = captured target image.
template <typename T>
Tensor<T> fuse_concat(const Tensor<T>& translated, const Tensor<T>& target) {
  detail::check_fusion_inputs(translated, target);
  return nn::ConcatSkip<T>::concat(translated, target);
}

/// |translated - target| replicated into two channels.
template <typename T>
Tensor<T> fuse_subtract(const Tensor<T>& translated, const Tensor<T>& target) {
  detail::check_fusion_inputs(translated, target);
  const int n = translated.dim(0), h = translated.dim(2), w = translated.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out({n, 2, h, w});
  for (int i = 0; i < n; ++i) {
    const T* a = translated.sample(i);
    const T* b = target.sample(i);
    T* o = out.sample(i);
    for (std::size_t k = 0; k < plane; ++k) o[k] = o[plane + k] = std::abs(a[k] - b[k]);
  }
  return out;
}

template <typename T>
Tensor<T> fuse(FusionOp op, const Tensor<T>& translated, const Tensor<T>& target) {
  return op == FusionOp::Concat ? fuse_concat(translated, target) : fuse_subtract(translated, target);
}

/// Gradient of the fused pair with respect to the translated image.
template <typename T>
Tensor<T> fuse_backward(FusionOp op, const Tensor<T>& translated, const Tensor<T>& target,
                        const Tensor<T>& grad_fused) {
  const int n = translated.dim(0);
  const std::size_t plane = static_cast<std::size_t>(translated.dim(2)) * translated.dim(3);
  Tensor<T> g(translated.shape());
  for (int i = 0; i < n; ++i) {
    const T* gf = grad_fused.sample(i);
    T* out = g.sample(i);
    if (op == FusionOp::Concat) {
      std::copy(gf, gf + plane, out);
    } else {
      const T* a = translated.sample(i);
      const T* b = target.sample(i);
      for (std::size_t k = 0; k < plane; ++k) {
        const T d = a[k] - b[k];
        const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        out[k] = sign * (gf[k] + gf[plane + k]);
      }
    }
  }
  return g;
}

/// Patch discriminator built from the stem and first two dense/transition
/// stages of a dense architecture. Defaults reproduce the full-size network
/// (96 stem features, growth 48, bottleneck 4, 6 and 12 dense layers).
struct DiscriminatorConfig {
  int in_channels = 2;
  int init_features = 96;
  int growth_rate = 48;
  int bn_size = 4;
  int block1_layers = 6;
  int block2_layers = 12;

  int block1_out() const { return init_features + block1_layers * growth_rate; }
  int transition1_out() const { return block1_out() / 2; }
  int block2_out() const { return transition1_out() + block2_layers * growth_rate; }
  int transition2_out() const { return block2_out() / 2; }

  void validate() const {
    if (in_channels != 2) throw std::invalid_argument("discriminator input must have 2 channels");
    if (init_features <= 0 || growth_rate <= 0 || bn_size <= 0 || block1_layers <= 0 || block2_layers <= 0)
      throw std::invalid_argument("discriminator widths and depths must be positive");
  }
};

inline constexpr int kPatchGrid = 8;

template <typename T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    using namespace nn;
    stem_.add(std::make_unique<Conv2d<T>>(cfg_.in_channels, cfg_.init_features, ConvGeometry{7, 2, 3}, false,
                             WeightInit::KaimingNormal));
    stem_.add(std::make_unique<BatchNorm2d<T>>(cfg_.init_features));
    stem_.add(std::make_unique<ReLU<T>>());
    stem_.add(std::make_unique<MaxPool2d<T>>(ConvGeometry{3, 2, 1}));

    add_dense_block(block1_, cfg_.init_features, cfg_.block1_layers);
    add_transition(transition1_, cfg_.block1_out());
    add_dense_block(block2_, cfg_.transition1_out(), cfg_.block2_layers);
    add_transition(transition2_, cfg_.block2_out());

    head_.add(std::make_unique<Conv2d<T>>(cfg_.transition2_out(), 1, ConvGeometry{1, 1, 0}, true, WeightInit::KaimingNormal));
    head_.add(std::make_unique<Sigmoid<T>>());
  }

  const DiscriminatorConfig& config() const noexcept { return cfg_; }

  void reset_parameters(std::mt19937_64& rng) {
    for (auto* s : stages()) s->reset_parameters(rng);
  }

  /// [B,2,128,128] -> [B,1,8,8] patch map in (0,1).
  Tensor<T> discriminate(const Tensor<T>& fused) const {
    check_input(fused);
    Tensor<T> h = fused;
    for (const auto* s : stages()) h = s->forward(h);
    return h;
  }

  Tensor<T> forward_train(const Tensor<T>& fused) {
    check_input(fused);
    Tensor<T> h = fused;
    for (auto* s : stages()) h = s->forward_train(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& grad_patch) {
    Tensor<T> g = grad_patch;
    auto all = stages();
    for (auto it = all.rbegin(); it != all.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  /// Output shape of each stage for a batch of `batch`, in order:
  /// stem, dense block 1, transition 1, dense block 2, transition 2, head.
  std::vector<std::pair<std::string, Shape>> stage_shapes(int batch) const {
    std::vector<std::pair<std::string, Shape>> out;
    Shape s{batch, cfg_.in_channels, kImageSize, kImageSize};
    const char* names[] = {"stem", "dense_block1", "transition1", "dense_block2", "transition2", "head"};
    int i = 0;
    for (const auto* st : stages()) {
      s = st->output_shape(s);
      out.emplace_back(names[i++], s);
    }
    return out;
  }

  nn::Sequential<T>& stem() noexcept { return stem_; }
  nn::Sequential<T>& block1() noexcept { return block1_; }
  nn::Sequential<T>& block2() noexcept { return block2_; }
  nn::Sequential<T>& transition1() noexcept { return transition1_; }
  nn::Sequential<T>& transition2() noexcept { return transition2_; }
  nn::Sequential<T>& head() noexcept { return head_; }

  void collect_state(const std::string& prefix, std::vector<nn::StateEntry<T>>& out) {
    stem_.collect_state(nn::join_name(prefix, "stem"), out);
    block1_.collect_state(nn::join_name(prefix, "block1"), out);
    transition1_.collect_state(nn::join_name(prefix, "transition1"), out);
    block2_.collect_state(nn::join_name(prefix, "block2"), out);
    transition2_.collect_state(nn::join_name(prefix, "transition2"), out);
    head_.collect_state(nn::join_name(prefix, "head"), out);
  }

 private:
  std::vector<nn::Sequential<T>*> stages() {
    return {&stem_, &block1_, &transition1_, &block2_, &transition2_, &head_};
  }
  std::vector<const nn::Sequential<T>*> stages() const {
    return {&stem_, &block1_, &transition1_, &block2_, &transition2_, &head_};
  }

  void check_input(const Tensor<T>& fused) const {
    expect_shape(fused, {-1, 2, kImageSize, kImageSize}, "discriminate");
  }

  void add_dense_block(nn::Sequential<T>& block, int in_features, int layers) {
    using namespace nn;
    const int bottleneck = cfg_.bn_size * cfg_.growth_rate;
    for (int l = 0; l < layers; ++l) {
      const int c = in_features + l * cfg_.growth_rate;
      Sequential<T> body;
      body.add(std::make_unique<BatchNorm2d<T>>(c));
      body.add(std::make_unique<ReLU<T>>());
      body.add(std::make_unique<Conv2d<T>>(c, bottleneck, ConvGeometry{1, 1, 0}, false, WeightInit::KaimingNormal));
      body.add(std::make_unique<BatchNorm2d<T>>(bottleneck));
      body.add(std::make_unique<ReLU<T>>());
      body.add(std::make_unique<Conv2d<T>>(bottleneck, cfg_.growth_rate, ConvGeometry{3, 1, 1}, false, WeightInit::KaimingNormal));
      block.add(std::make_unique<ConcatSkip<T>>(std::move(body)));
    }
  }

  void add_transition(nn::Sequential<T>& t, int in_features) {
    using namespace nn;
    t.add(std::make_unique<BatchNorm2d<T>>(in_features));
    t.add(std::make_unique<ReLU<T>>());
    t.add(std::make_unique<Conv2d<T>>(in_features, in_features / 2, ConvGeometry{1, 1, 0}, false, WeightInit::KaimingNormal));
    t.add(std::make_unique<AvgPool2d<T>>(2));
  }

  DiscriminatorConfig cfg_;
  nn::Sequential<T> stem_, block1_, transition1_, block2_, transition2_, head_;
};

/// Scalar attack score of each sample: the mean of its patch map.
template <typename T>
std::vector<double> score(const Tensor<T>& patch_maps) {
  expect_shape(patch_maps, {-1, 1, -1, -1}, "score");
  std::vector<double> out;
  out.reserve(patch_maps.dim(0));
  const std::size_t per = patch_maps.stride0();
  for (int i = 0; i < patch_maps.dim(0); ++i) {
    const T* p = patch_maps.sample(i);
    double s = 0;
    for (std::size_t k = 0; k < per; ++k) s += p[k];
    out.push_back(s / static_cast<double>(per));
  }
  return out;
}

/// Score-level fusion of several bi-modality models: the arithmetic mean.
inline double fuse_scores(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("fuse_scores needs at least one score");
  double s = 0;
  for (double v : scores) s += v;
  return s / static_cast<double>(scores.size());
}

}  // namespace amtpad
