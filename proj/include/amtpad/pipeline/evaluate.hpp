#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "amtpad/data/protocols.hpp"
#include "amtpad/metrics.hpp"
#include "amtpad/pipeline/model.hpp"
#include "amtpad/pipeline/samples.hpp"
#include "amtpad/pipeline/scores.hpp"

namespace amtpad::pipeline {

/// Mean absolute translation error (network range) per class.
struct ReconstructionStats {
  double genuine = 0.0;
  double attack = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_attack = 0;
};

/// Scores samples in batches; optionally accumulates reconstruction errors.
/// Samples are scored in the order given.
inline std::vector<ScoreRow> score_samples(const Model<float>& model, const std::vector<const PreparedSample*>& samples,
                                           int batch_size = 32, ReconstructionStats* recon = nullptr) {
  std::vector<ScoreRow> rows;
  rows.reserve(samples.size());
  double sum_g = 0, sum_a = 0;
  std::size_t ng = 0, na = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const PreparedSample*> batch(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                             samples.begin() + static_cast<std::ptrdiff_t>(end));
    const auto [src, tgt] = assemble(batch);
    const auto [translated, patches] = model.infer(src, tgt);
    const auto scores = score(patches);
    const std::size_t per = translated.stride0();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      rows.push_back({batch[i]->sample_id, scores[i], batch[i]->label, batch[i]->attack_type, batch[i]->illumination_id});
      if (!recon) continue;
      double e = 0;
      const float* a = translated.sample(static_cast<int>(i));
      const float* b = tgt.sample(static_cast<int>(i));
      for (std::size_t k = 0; k < per; ++k) e += std::abs(static_cast<double>(a[k]) - b[k]);
      e /= static_cast<double>(per);
      (batch[i]->label == 0 ? sum_g : sum_a) += e;
      ++(batch[i]->label == 0 ? ng : na);
    }
  }
  if (recon) {
    recon->n_genuine = ng;
    recon->n_attack = na;
    recon->genuine = ng ? sum_g / static_cast<double>(ng) : 0.0;
    recon->attack = na ? sum_a / static_cast<double>(na) : 0.0;
  }
  return rows;
}

struct Evaluation {
  std::vector<ScoreRow> dev;
  std::vector<ScoreRow> test;
  MetricReport report;
  ReconstructionStats test_reconstruction;
};

inline std::vector<const PreparedSample*> lookup_all(const std::map<std::string, PreparedSample>& samples,
                                                     const std::vector<std::string>& ids) {
  std::vector<const PreparedSample*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = samples.find(id);
    if (it == samples.end()) throw std::out_of_range("sample '" + id + "' was not prepared");
    out.push_back(&it->second);
  }
  return out;
}

/// Scores dev and test, calibrates the threshold on dev and reports on test.
inline Evaluation evaluate_model(const Model<float>& model, const std::map<std::string, PreparedSample>& samples,
                                 const data::ProtocolSplit& split, double target_bpcer = 0.01, int batch_size = 32) {
  Evaluation ev;
  ev.dev = score_samples(model, lookup_all(samples, split.dev_ids), batch_size);
  ev.test = score_samples(model, lookup_all(samples, split.test_ids), batch_size, &ev.test_reconstruction);
  ev.report = evaluate_scores(to_score_set(ev.dev), to_score_set(ev.test), target_bpcer);
  return ev;
}

}  // namespace amtpad::pipeline
