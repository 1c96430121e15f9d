#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "amtpad/fusion_disc.hpp"
#include "amtpad/losses.hpp"
#include "amtpad/translator.hpp"
#include "grad_check.hpp"

using namespace amtpad;
using testing_support::random_tensor;

namespace {

TranslatorConfig compact() {
  TranslatorConfig c;
  c.base_width = 4;
  c.latent_channels = 8;
  c.n_translation_blocks = 2;
  c.projector_width = 4;
  c.embedding_dim = 16;
  return c;
}

template <typename S>
long trainable_count(S& s) {
  std::vector<nn::StateEntry<float>> st;
  s.collect_state("", st);
  long n = 0;
  for (auto& e : st)
    if (e.trainable()) n += static_cast<long>(e.value->size());
  return n;
}

}  // namespace

TEST(TranslatorShapes, FullSizeContracts) {
  Translator<float> t{TranslatorConfig{}};
  EXPECT_EQ(t.encoder().output_shape({4, 1, 128, 128}), (Shape{4, 256, 32, 32}));
  EXPECT_EQ(t.blocks().output_shape({2, 256, 32, 32}), (Shape{2, 256, 32, 32}));
  EXPECT_EQ(t.decoder().output_shape({3, 256, 32, 32}), (Shape{3, 1, 128, 128}));
  EXPECT_EQ(t.projector().output_shape({8, 256, 32, 32}), (Shape{8, 128}));
}

TEST(TranslatorShapes, FullSizeEncoderRunsOnZeroImage) {
  Translator<float> t{TranslatorConfig{}};
  std::mt19937_64 rng(1);
  t.reset_parameters(rng);
  const auto z = t.encode(Tensor<float>({1, 1, 128, 128}));
  EXPECT_EQ(z.shape(), (Shape{1, 256, 32, 32}));
  EXPECT_TRUE(z.all_finite());
}

TEST(TranslatorShapes, ExactParameterBookkeeping) {
  Translator<float> t{TranslatorConfig{}};
  // convolutions feeding an instance norm carry no bias
  EXPECT_EQ(trainable_count(t.encoder()), 1L * 64 * 49 + 64L * 128 * 9 + 128L * 256 * 9);
  EXPECT_EQ(trainable_count(t.blocks()), 9L * 2 * 256 * 256 * 9);
  EXPECT_EQ(trainable_count(t.decoder()), 256L * 128 * 9 + 128L * 64 * 9 + 64L * 49 + 1);
  EXPECT_EQ(trainable_count(t.projector()), 256L * 64 * 9 + 64 + 1024L * 128 + 128);
}

TEST(TranslatorShapes, RejectsWrongInput) {
  Translator<float> t{compact()};
  EXPECT_THROW(t.encode(Tensor<float>({1, 1, 64, 64})), ContractError);
  EXPECT_THROW(t.decode(Tensor<float>({1, 8, 16, 16})), ContractError);
  EXPECT_THROW(t.project(Tensor<float>({1, 7, 32, 32})), ContractError);
  EXPECT_THROW(t.translate_latent(Tensor<float>({1, 8, 32, 31})), ContractError);
}

TEST(TranslatorConfig, Validation) {
  TranslatorConfig c;
  c.embedding_dim = 0;
  EXPECT_THROW(Translator<float>{c}, std::invalid_argument);
  c = TranslatorConfig{};
  c.n_translation_blocks = -1;
  EXPECT_THROW(Translator<float>{c}, std::invalid_argument);
}

TEST(TranslatorForward, RangesAndUnitEmbeddings) {
  Translator<float> t{compact()};
  std::mt19937_64 rng(2);
  t.reset_parameters(rng);
  const auto x = random_tensor({3, 1, 128, 128}, rng).cast<float>();
  const auto out = t.forward_train(x, true);
  EXPECT_EQ(out.translated.shape(), (Shape{3, 1, 128, 128}));
  for (float v : out.translated.values()) EXPECT_TRUE(v > -1.0f && v < 1.0f);
  ASSERT_EQ(out.embedding.shape(), (Shape{3, 16}));
  for (int n = 0; n < 3; ++n) {
    double s = 0;
    for (int k = 0; k < 16; ++k) s += out.embedding.at(n, k) * out.embedding.at(n, k);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const auto inference = t.translate(x);
  EXPECT_EQ(inference, out.translated);
}

TEST(TranslatorForward, ProjectorOnlyWhenRequested) {
  Translator<float> t{compact()};
  std::mt19937_64 rng(3);
  t.reset_parameters(rng);
  const auto x = random_tensor({2, 1, 128, 128}, rng).cast<float>();
  EXPECT_TRUE(t.forward_train(x, false).embedding.empty());
}

TEST(TranslatorForward, ZeroBlocksAreIdentity) {
  Translator<float> t{compact()};
  std::mt19937_64 rng(4);
  t.reset_parameters(rng);
  std::vector<nn::StateEntry<float>> st;
  t.blocks().collect_state("", st);
  for (auto& e : st) e.value->zero();
  const auto z = random_tensor({2, 8, 32, 32}, rng).cast<float>();
  EXPECT_EQ(t.translate_latent(z), z);
}

TEST(TranslatorForward, WithoutTranslationBlockSkipsBlocks) {
  TranslatorConfig c = compact();
  c.with_translation_block = false;
  Translator<float> t{c};
  std::mt19937_64 rng(5);
  t.reset_parameters(rng);
  const auto x = random_tensor({1, 1, 128, 128}, rng).cast<float>();
  EXPECT_EQ(t.translate(x), t.decode(t.encode(x)));
}

TEST(TranslatorForward, NetworkRangeMaps) {
  Tensor<float> img({1, 1, 2, 2}, 0.25f);
  const auto n = to_network_range(img);
  EXPECT_FLOAT_EQ(n[0], -0.5f);
  EXPECT_EQ(from_network_range(n), img);
}

// Gradient of a scalar objective through the whole translator in double. The
// step is small because ReLU kinks lie densely in the 128x128 activations.
TEST(TranslatorBackward, MatchesFiniteDifferences) {
  TranslatorConfig c = compact();
  c.base_width = 2;
  c.latent_channels = 4;
  c.projector_width = 2;
  c.embedding_dim = 4;
  Translator<double> t{c};
  std::mt19937_64 rng(6);
  t.reset_parameters(rng);
  const auto x = random_tensor({2, 1, 128, 128}, rng);
  const auto wx = random_tensor({2, 1, 128, 128}, rng);
  const auto wz = random_tensor({2, 4}, rng);
  auto objective = [&] {
    const auto out = t.forward_train(x, true);
    double s = 0;
    for (std::size_t k = 0; k < wx.size(); ++k) s += wx[k] * out.translated[k];
    for (std::size_t k = 0; k < wz.size(); ++k) s += wz[k] * out.embedding[k];
    return s;
  };
  std::vector<nn::StateEntry<double>> st;
  t.collect_state("", st);
  for (auto& e : st) e.grad->zero();
  objective();
  t.backward(wx, &wz);

  std::uniform_int_distribution<std::size_t> pick;
  int checked = 0;
  for (auto& e : st) {
    for (int rep = 0; rep < 2; ++rep) {
      const std::size_t k = pick(rng) % e.value->size();
      const double keep = (*e.value)[k];
      (*e.value)[k] = keep + 1e-8;
      const double up = objective();
      (*e.value)[k] = keep - 1e-8;
      const double down = objective();
      (*e.value)[k] = keep;
      const double num = (up - down) / 2e-8, ana = (*e.grad)[k];
      EXPECT_NEAR(ana, num, 1e-4 * std::max(1.0, std::abs(num))) << e.name << "[" << k << "]";
      ++checked;
    }
  }
  EXPECT_EQ(checked, 2 * static_cast<int>(st.size()));
}

TEST(TranslatorBackward, EveryParameterReceivesGradient) {
  Translator<float> t{compact()};
  DiscriminatorConfig dc;
  dc.init_features = 8;
  dc.growth_rate = 4;
  dc.bn_size = 2;
  dc.block1_layers = 1;
  dc.block2_layers = 1;
  Discriminator<float> d{dc};
  std::mt19937_64 rng(7);
  t.reset_parameters(rng);
  d.reset_parameters(rng);
  const auto src = random_tensor({6, 1, 128, 128}, rng).cast<float>();
  const auto tgt = random_tensor({6, 1, 128, 128}, rng).cast<float>();
  const std::vector<int> labels{0, 1, 0, 1, 0, 1};

  std::vector<nn::StateEntry<float>> st;
  t.collect_state("t", st);
  d.collect_state("d", st);
  for (auto& e : st)
    if (e.trainable()) e.grad->zero();
  auto out = t.forward_train(src, true);
  LabeledBatch<float> b;
  b.patch_maps = d.forward_train(fuse_concat(out.translated, tgt));
  b.translated = out.translated;
  b.target = tgt;
  b.embeddings = out.embedding;
  b.labels = labels;
  auto loss = total_loss(b, LossWeights{});
  ASSERT_FALSE(loss.degenerate_contrastive);
  auto g = loss.grad_translated;
  g += fuse_backward(FusionOp::Concat, b.translated, tgt, d.backward(loss.grad_patch_maps));
  t.backward(g, &loss.grad_embeddings);
  for (auto& e : st) {
    if (!e.trainable()) continue;
    double s = 0;
    for (float v : e.grad->values()) s += std::abs(v);
    EXPECT_GT(s, 0.0) << e.name;
  }
}
