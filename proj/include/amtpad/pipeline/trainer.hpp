#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amtpad/data/protocols.hpp"
#include "amtpad/losses.hpp"
#include "amtpad/metrics.hpp"
#include "amtpad/nn/optim.hpp"
#include "amtpad/pipeline/evaluate.hpp"
#include "amtpad/pipeline/model.hpp"
#include "amtpad/pipeline/samples.hpp"

namespace amtpad::pipeline {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-size batches with a fixed genuine quota (at least two genuine and
/// one attack). Each class is drawn without replacement from its own seeded
/// shuffle and reshuffled when exhausted. An epoch is long enough for both
/// classes to be visited in full.
class StratifiedBatchSampler {
 public:
  StratifiedBatchSampler(std::vector<std::string> genuine, std::vector<std::string> attack, int batch_size,
                         std::uint64_t seed)
      : genuine_(std::move(genuine)), attack_(std::move(attack)), batch_(batch_size), seed_(seed) {
    if (batch_ < 4) throw TrainingError("batch size must be >= 4");
    if (genuine_.empty()) throw TrainingError("training split has no genuine sample");
    if (attack_.empty()) throw TrainingError("training split has no attack sample");
    const double total = static_cast<double>(genuine_.size() + attack_.size());
    genuine_quota_ = std::clamp(static_cast<int>(std::lround(batch_ * static_cast<double>(genuine_.size()) / total)), 2,
                                batch_ - 1);
    const auto ceil_div = [](std::size_t n, int d) { return static_cast<int>((n + d - 1) / d); };
    batches_ = std::max(ceil_div(genuine_.size(), genuine_quota_), ceil_div(attack_.size(), batch_ - genuine_quota_));
  }

  int batches_per_epoch() const noexcept { return batches_; }
  int genuine_per_batch() const noexcept { return genuine_quota_; }

  std::vector<std::vector<std::string>> epoch(int epoch) const {
    std::mt19937_64 rng(seed_ * 1000003ull + static_cast<std::uint64_t>(epoch));
    Stream g{genuine_, genuine_.size(), {}}, a{attack_, attack_.size(), {}};
    std::vector<std::vector<std::string>> out(batches_);
    for (auto& b : out) {
      for (int k = 0; k < genuine_quota_; ++k) b.push_back(g.next(rng));
      for (int k = genuine_quota_; k < batch_; ++k) b.push_back(a.next(rng));
      std::shuffle(b.begin(), b.end(), rng);
    }
    return out;
  }

 private:
  struct Stream {
    const std::vector<std::string>& pool;
    std::size_t pos;
    std::vector<std::string> order;
    const std::string& next(std::mt19937_64& rng) {
      if (pos >= order.size()) {
        order = pool;
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      return order[pos++];
    }
  };

  std::vector<std::string> genuine_, attack_;
  int batch_;
  std::uint64_t seed_;
  int genuine_quota_ = 2;
  int batches_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  int steps = 0;
  double total = 0.0;
  double translation = 0.0;
  double latent = 0.0;
  double discrimination = 0.0;
  int degenerate_steps = 0;
  double dev_auc = 0.0;
  double dev_threshold = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_dev_auc = -1.0;
};

inline nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json j;
  j["best_epoch"] = h.best_epoch;
  j["best_dev_auc"] = h.best_dev_auc;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : h.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"lr", e.lr},
                           {"steps", e.steps},
                           {"total", e.total},
                           {"translation", e.translation},
                           {"latent", e.latent},
                           {"discrimination", e.discrimination},
                           {"degenerate_steps", e.degenerate_steps},
                           {"dev_auc", e.dev_auc},
                           {"dev_threshold", e.dev_threshold},
                           {"wall_seconds", e.wall_seconds}});
  return j;
}

struct TrainOptions {
  /// Directory for final.ckpt, best.ckpt and history.json; empty = keep in memory only.
  std::filesystem::path out_dir;
  /// Called after every epoch (logging).
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<Model<float>> final_model;
  std::unique_ptr<Model<float>> best_model;
  TrainHistory history;
};

/// Copies parameter and buffer values between two models of the same config.
inline void copy_state(Model<float>& dst, Model<float>& src) {
  auto d = dst.state();
  auto s = src.state();
  if (d.size() != s.size()) throw TrainingError("models differ in structure");
  for (std::size_t k = 0; k < d.size(); ++k) *d[k].value = *s[k].value;
}

/// One optimisation step on a batch; returns the loss breakdown.
inline LossBreakdown<float> train_step(Model<float>& model, nn::Adam<float>& opt, const Tensor<float>& source,
                                       const Tensor<float>& target, const std::vector<int>& labels) {
  const TrainConfig& cfg = model.config();
  const bool projector = cfg.supervision == Supervision::V0;
  opt.zero_grad();
  auto out = model.translator().forward_train(source, projector);
  const Tensor<float> fused = fuse(cfg.fusion_op, out.translated, target);
  LabeledBatch<float> batch;
  batch.patch_maps = model.discriminator().forward_train(fused);
  batch.translated = std::move(out.translated);
  batch.target = target;
  batch.embeddings = std::move(out.embedding);
  batch.labels = labels;
  auto loss = total_loss(batch, cfg.loss, cfg.supervision);
  const Tensor<float> grad_fused = model.discriminator().backward(loss.grad_patch_maps);
  Tensor<float> grad_translated = loss.grad_translated;
  grad_translated += fuse_backward(cfg.fusion_op, batch.translated, target, grad_fused);
  model.translator().backward(grad_translated, projector ? &loss.grad_embeddings : nullptr);
  opt.step();
  return loss;
}

/// Joint training of translator and discriminator on split.train_ids, with
/// genuine upsampling and stratified batches. Dev AUC is measured after every
/// epoch; the best-dev-AUC parameters are kept alongside the final ones.
inline TrainResult train(const TrainConfig& cfg, const data::ProtocolSplit& split, const data::DatasetIndex& index,
                         const std::map<std::string, PreparedSample>& samples, const TrainOptions& opts = {}) {
  cfg.validate();
  const auto train_ids = data::upsample_genuine(index, split.train_ids, cfg.genuine_upsampling);
  std::vector<std::string> genuine, attack;
  for (const auto& id : train_ids) (lookup_all(samples, {id}).front()->label == 0 ? genuine : attack).push_back(id);
  StratifiedBatchSampler sampler(genuine, attack, cfg.batch_size, cfg.seed);
  const auto dev = lookup_all(samples, split.dev_ids);
  const bool dev_usable = std::any_of(dev.begin(), dev.end(), [](auto* s) { return s->label == 0; }) &&
                          std::any_of(dev.begin(), dev.end(), [](auto* s) { return s->label == 1; });

  TrainResult result;
  result.final_model = std::make_unique<Model<float>>(cfg);
  result.best_model = std::make_unique<Model<float>>(cfg);
  Model<float>& model = *result.final_model;
  model.reset_parameters(cfg.seed);
  nn::Adam<float> opt(model.state(), {cfg.lr, 0.9, 0.999, 1e-8});

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = nn::step_decay_lr(cfg.lr, epoch, cfg.lr_decay_period, cfg.lr_decay_factor);
    opt.set_lr(rec.lr);
    for (const auto& ids : sampler.epoch(epoch)) {
      const auto batch = lookup_all(samples, ids);
      std::vector<int> labels;
      for (const auto* s : batch) labels.push_back(s->label);
      const auto [src, tgt] = assemble(batch);
      const auto loss = train_step(model, opt, src, tgt, labels);
      ++rec.steps;
      rec.total += loss.total;
      rec.translation += loss.translation;
      rec.latent += loss.latent;
      rec.discrimination += loss.discrimination;
      rec.degenerate_steps += loss.no_genuine || loss.degenerate_contrastive;
    }
    for (double* v : {&rec.total, &rec.translation, &rec.latent, &rec.discrimination}) *v /= rec.steps;
    if (dev_usable) {
      const ScoreSet dev_scores = to_score_set(score_samples(model, dev, cfg.batch_size));
      rec.dev_auc = roc_auc(dev_scores);
      rec.dev_threshold = threshold_at_bpcer(dev_scores, cfg.target_bpcer);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (rec.dev_auc >= result.history.best_dev_auc) {
      result.history.best_dev_auc = rec.dev_auc;
      result.history.best_epoch = epoch;
      copy_state(*result.best_model, model);
      if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "best.ckpt", model, epoch);
    }
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  if (!opts.out_dir.empty()) {
    save_checkpoint(opts.out_dir / "final.ckpt", model, cfg.max_epochs);
    std::ofstream(opts.out_dir / "history.json") << to_json(result.history).dump(2) << '\n';
  }
  return result;
}

}  // namespace amtpad::pipeline
