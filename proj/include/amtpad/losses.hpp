#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/tensor.hpp"

namespace amtpad {

/// Weights of the loss terms and the contrastive hyper-parameters.
struct LossWeights {
  double lambda1 = 0.5;
  double lambda2 = 1e-3;
  double lambda3 = 1.0;
  double tau = 0.1;
  double c_trunc = -10.0;
  /// Constant map (network range) that attacks are pushed to under v1.
  double v1_constant = 0.0;
  /// Add the other genuine samples to the contrastive denominator.
  bool denominator_includes_positives = false;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw std::invalid_argument("loss weights must be non-negative");
  }
};

/// How the translator is supervised: v0 is the asymmetric pixel + contrastive
/// loss; v1 maps attacks to a constant map; v2 reconstructs every sample.
enum class Supervision { V0, V1, V2 };

inline std::string to_string(Supervision s) {
  switch (s) {
    case Supervision::V0: return "v0";
    case Supervision::V1: return "v1";
    case Supervision::V2: return "v2";
  }
  return "?";
}

inline Supervision parse_supervision(const std::string& s) {
  if (s == "v0") return Supervision::V0;
  if (s == "v1") return Supervision::V1;
  if (s == "v2") return Supervision::V2;
  throw std::invalid_argument("unknown supervision '" + s + "' (expected v0, v1 or v2)");
}

/// A loss value together with its gradient with respect to one input tensor.
template <typename T>
struct LossTerm {
  double value = 0.0;
  /// Set when the batch cannot define the term (no genuine sample for the
  /// pixel loss; fewer than two genuine or no attack for the contrastive loss).
  bool vacuous = false;
  Tensor<T> grad;
};

namespace detail {

inline void check_labels(const std::vector<int>& labels, int batch, const char* what) {
  if (static_cast<int>(labels.size()) != batch)
    throw ContractError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for a batch of " +
                        std::to_string(batch));
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractError(std::string(what) + ": labels must be 0 (genuine) or 1 (attack)");
}

inline void check_image_pair(const Shape& a, const Shape& b, const char* what) {
  if (a.size() != 4 || a[1] != 1 || a != b)
    throw ContractError(std::string(what) + ": expected two [B,1,H,W] tensors, got " + to_string(a) + " and " +
                        to_string(b));
}

inline double sign(double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); }

/// Sum over the chosen samples of w_n · mean|x_n - ref_n|, with the gradient.
/// `ref` == nullptr means the constant `constant`.
template <typename T>
LossTerm<T> weighted_mae(const Tensor<T>& x, const Tensor<T>* ref, double constant, const std::vector<double>& w) {
  LossTerm<T> out;
  out.grad = Tensor<T>(x.shape());
  const std::size_t per = x.stride0();
  for (int n = 0; n < x.dim(0); ++n) {
    if (w[n] == 0.0) continue;
    const T* a = x.sample(n);
    const T* b = ref ? ref->sample(n) : nullptr;
    T* g = out.grad.sample(n);
    double s = 0.0;
    const double scale = w[n] / static_cast<double>(per);
    for (std::size_t k = 0; k < per; ++k) {
      const double d = static_cast<double>(a[k]) - (b ? static_cast<double>(b[k]) : constant);
      s += std::abs(d);
      g[k] = static_cast<T>(scale * sign(d));
    }
    out.value += w[n] * s / static_cast<double>(per);
  }
  return out;
}

}  // namespace detail

/// Mean absolute error averaged over genuine samples only. Attack samples
/// contribute nothing, neither to the value nor to the gradient.
template <typename T>
LossTerm<T> pixel_loss(const Tensor<T>& translated, const Tensor<T>& target, const std::vector<int>& labels) {
  detail::check_image_pair(translated.shape(), target.shape(), "pixel_loss");
  detail::check_labels(labels, translated.dim(0), "pixel_loss");
  const auto n_genuine = std::count(labels.begin(), labels.end(), 0);
  if (n_genuine == 0) {
    LossTerm<T> out;
    out.vacuous = true;
    out.grad = Tensor<T>(translated.shape());
    return out;
  }
  std::vector<double> w(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) w[n] = labels[n] == 0 ? 1.0 / static_cast<double>(n_genuine) : 0.0;
  return detail::weighted_mae(translated, &target, 0.0, w);
}

/// Truncated asymmetric supervised contrastive loss over L2-normalised
/// embeddings [B,D]. For every ordered genuine pair (n, g), n ≠ g:
///   term = max(-z_n·z_g/τ + log Σ_{a∈A} exp(z_n·z_a/τ), c_trunc)
/// and the loss is Σ term / (|G| - 1).
template <typename T>
LossTerm<T> latent_contrastive_loss(const Tensor<T>& embeddings, const std::vector<int>& labels, double tau,
                                    double c_trunc, bool denominator_includes_positives = false) {
  if (embeddings.rank() != 2) throw ContractError("latent_contrastive_loss expects [B,D], got " + to_string(embeddings.shape()));
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const int b = embeddings.dim(0), d = embeddings.dim(1);
  detail::check_labels(labels, b, "latent_contrastive_loss");
  std::vector<int> genuine, attack;
  for (int n = 0; n < b; ++n) (labels[n] == 0 ? genuine : attack).push_back(n);

  LossTerm<T> out;
  out.grad = Tensor<T>(embeddings.shape());
  if (genuine.size() < 2 || attack.empty()) {
    out.vacuous = true;
    return out;
  }

  std::vector<double> sim(static_cast<std::size_t>(b) * b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      double s = 0;
      for (int k = 0; k < d; ++k) s += static_cast<double>(embeddings.at(i, k)) * embeddings.at(j, k);
      sim[static_cast<std::size_t>(i) * b + j] = s / tau;
    }
  auto S = [&](int i, int j) { return sim[static_cast<std::size_t>(i) * b + j]; };

  // coefficient[i][j]: d loss / d (z_i·z_j / τ) accumulated over all terms
  std::vector<double> coef(static_cast<std::size_t>(b) * b, 0.0);
  const double norm = 1.0 / static_cast<double>(genuine.size() - 1);
  std::vector<int> denom;
  std::vector<double> soft;
  for (int n : genuine) {
    denom = attack;
    if (denominator_includes_positives)
      for (int g : genuine)
        if (g != n) denom.push_back(g);
    double mx = -std::numeric_limits<double>::infinity();
    for (int a : denom) mx = std::max(mx, S(n, a));
    double z = 0;
    soft.assign(denom.size(), 0.0);
    for (std::size_t k = 0; k < denom.size(); ++k) z += (soft[k] = std::exp(S(n, denom[k]) - mx));
    const double lse = mx + std::log(z);
    for (auto& s : soft) s /= z;

    for (int g : genuine) {
      if (g == n) continue;
      const double term = -S(n, g) + lse;
      if (term < c_trunc) {
        out.value += c_trunc * norm;
        continue;
      }
      out.value += term * norm;
      coef[static_cast<std::size_t>(n) * b + g] -= norm;
      for (std::size_t k = 0; k < denom.size(); ++k) coef[static_cast<std::size_t>(n) * b + denom[k]] += norm * soft[k];
    }
  }

  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      const double c = coef[static_cast<std::size_t>(i) * b + j] / tau;
      if (c == 0.0) continue;
      for (int k = 0; k < d; ++k) {
        out.grad.at(i, k) += static_cast<T>(c * embeddings.at(j, k));
        out.grad.at(j, k) += static_cast<T>(c * embeddings.at(i, k));
      }
    }
  return out;
}

inline constexpr double kBceClamp = 1e-7;

/// Pixel-wise binary cross-entropy on the patch maps, label broadcast to every
/// patch, averaged over samples and patches. Predictions are clamped to
/// [1e-7, 1 - 1e-7]; the gradient is zero where the clamp is active.
template <typename T>
LossTerm<T> discrimination_loss(const Tensor<T>& patch_maps, const std::vector<int>& labels) {
  expect_shape(patch_maps, {-1, 1, -1, -1}, "discrimination_loss");
  detail::check_labels(labels, patch_maps.dim(0), "discrimination_loss");
  LossTerm<T> out;
  out.grad = Tensor<T>(patch_maps.shape());
  const double count = static_cast<double>(patch_maps.size());
  const std::size_t per = patch_maps.stride0();
  for (int n = 0; n < patch_maps.dim(0); ++n) {
    const double y = labels[n];
    const T* t = patch_maps.sample(n);
    T* g = out.grad.sample(n);
    for (std::size_t k = 0; k < per; ++k) {
      const double raw = t[k];
      const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
      out.value -= y * std::log(p) + (1 - y) * std::log(1 - p);
      if (raw == p) g[k] = static_cast<T>((-y / p + (1 - y) / (1 - p)) / count);
    }
  }
  out.value /= count;
  return out;
}

/// (1/N)(Σ_G mean|x' - x| + Σ_A mean|x' - c|).
template <typename T>
LossTerm<T> variant_loss_v1(const Tensor<T>& translated, const Tensor<T>& target, const std::vector<int>& labels,
                            double constant) {
  detail::check_image_pair(translated.shape(), target.shape(), "variant_loss_v1");
  detail::check_labels(labels, translated.dim(0), "variant_loss_v1");
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  std::vector<double> wg(labels.size()), wa(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) (labels[n] == 0 ? wg : wa)[n] = inv_n;
  LossTerm<T> out = detail::weighted_mae(translated, &target, 0.0, wg);
  LossTerm<T> att = detail::weighted_mae(translated, static_cast<const Tensor<T>*>(nullptr), constant, wa);
  out.value += att.value;
  out.grad += att.grad;
  return out;
}

/// Mean reconstruction error over every sample, whatever its label.
template <typename T>
LossTerm<T> variant_loss_v2(const Tensor<T>& translated, const Tensor<T>& target) {
  detail::check_image_pair(translated.shape(), target.shape(), "variant_loss_v2");
  const int n = translated.dim(0);
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return detail::weighted_mae(translated, &target, 0.0, w);
}

/// Everything the losses read from one forward pass. Images are in network
/// range; labels are 0 (genuine) / 1 (attack).
template <typename T>
struct LabeledBatch {
  Tensor<T> translated;
  Tensor<T> target;
  Tensor<T> embeddings;  ///< may be empty under v1/v2
  Tensor<T> patch_maps;
  std::vector<int> labels;
};

/// Component values, total and gradients of one loss evaluation.
template <typename T>
struct LossBreakdown {
  Supervision supervision = Supervision::V0;
  double translation = 0.0;  ///< pixel loss under v0, L_v1 / L_v2 otherwise
  double latent = 0.0;
  double discrimination = 0.0;
  double amt = 0.0;
  double total = 0.0;
  bool no_genuine = false;
  bool degenerate_contrastive = false;
  Tensor<T> grad_translated;
  Tensor<T> grad_embeddings;
  Tensor<T> grad_patch_maps;
};

/// λ1·L_pixel + λ2·L_latent, with its gradients.
template <typename T>
LossBreakdown<T> amt_loss(const LabeledBatch<T>& batch, const LossWeights& w) {
  w.validate();
  LossBreakdown<T> out;
  auto pix = pixel_loss(batch.translated, batch.target, batch.labels);
  auto lat = latent_contrastive_loss(batch.embeddings, batch.labels, w.tau, w.c_trunc, w.denominator_includes_positives);
  out.translation = pix.value;
  out.latent = lat.value;
  out.no_genuine = pix.vacuous;
  out.degenerate_contrastive = lat.vacuous;
  out.amt = w.lambda1 * pix.value + w.lambda2 * lat.value;
  out.total = out.amt;
  out.grad_translated = std::move(pix.grad);
  out.grad_translated *= static_cast<T>(w.lambda1);
  out.grad_embeddings = std::move(lat.grad);
  out.grad_embeddings *= static_cast<T>(w.lambda2);
  return out;
}

/// Full objective. Under v0: λ1·L_pixel + λ2·L_latent + λ3·L_dis. Under v1/v2
/// the projector is unused and the translation term λ1·L_v replaces L_AMT.
template <typename T>
LossBreakdown<T> total_loss(const LabeledBatch<T>& batch, const LossWeights& w,
                            Supervision supervision = Supervision::V0) {
  w.validate();
  LossBreakdown<T> out;
  if (supervision == Supervision::V0) {
    out = amt_loss(batch, w);
  } else {
    auto v = supervision == Supervision::V1 ? variant_loss_v1(batch.translated, batch.target, batch.labels, w.v1_constant)
                                            : variant_loss_v2(batch.translated, batch.target);
    out.translation = v.value;
    out.amt = w.lambda1 * v.value;
    out.grad_translated = std::move(v.grad);
    out.grad_translated *= static_cast<T>(w.lambda1);
  }
  out.supervision = supervision;
  auto dis = discrimination_loss(batch.patch_maps, batch.labels);
  out.discrimination = dis.value;
  out.total = out.amt + w.lambda3 * dis.value;
  out.grad_patch_maps = std::move(dis.grad);
  out.grad_patch_maps *= static_cast<T>(w.lambda3);
  return out;
}

}  // namespace amtpad
