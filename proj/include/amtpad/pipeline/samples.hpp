#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amtpad/data/dataset.hpp"
#include "amtpad/data/preprocess.hpp"
#include "amtpad/data/protocols.hpp"
#include "amtpad/image.hpp"
#include "amtpad/plgf.hpp"
#include "amtpad/translator.hpp"

namespace amtpad::pipeline {

/// A sample after loading, illumination normalisation and the mapping to
/// network range, kept in single precision.
struct PreparedSample {
  std::string sample_id;
  int label = 0;
  std::string attack_type;
  std::string illumination_id;
  std::vector<float> source;
  std::vector<float> target;
};

inline std::vector<float> network_pixels(const GrayImage& img) {
  std::vector<float> out(img.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(),
                 [](double v) { return static_cast<float>(2.0 * v - 1.0); });
  return out;
}

/// Illumination normalisation still to apply, given what a preprocessed
/// dataset already holds. Stored descriptors are rescaled to what `in_cfg`
/// would have produced.
inline ModalityInConfig remaining_normalization(ModalityInConfig in_cfg, const data::PreprocessSidecar& done) {
  if ((done.source_plgf && !in_cfg.source_plgf) || (done.target_plgf && !in_cfg.target_plgf))
    throw std::invalid_argument("dataset holds PLGF images for a modality the config leaves raw");
  if (done.source_plgf) in_cfg.source_plgf = false;
  if (done.target_plgf) in_cfg.target_plgf = false;
  return in_cfg;
}

inline PreparedSample prepare(const BiModalSample& raw, const ModalityInConfig& in_cfg,
                              const data::PreprocessSidecar* done = nullptr) {
  if (raw.source.height != kImageSize || raw.source.width != kImageSize || raw.target.height != kImageSize ||
      raw.target.width != kImageSize)
    throw ContractError("sample '" + raw.sample_id + "' is not " + std::to_string(kImageSize) + "x" +
                        std::to_string(kImageSize));
  BiModalSample s = normalize_sample(raw, done ? remaining_normalization(in_cfg, *done) : in_cfg);
  if (done && !in_cfg.rescale_to_unit) {
    const double undo = 1.0 / done->stored_scale;
    if (done->source_plgf)
      for (auto& v : s.source.pixels) v *= undo;
    if (done->target_plgf)
      for (auto& v : s.target.pixels) v *= undo;
  }
  PreparedSample p;
  p.sample_id = s.sample_id;
  p.label = s.label;
  p.attack_type = s.attack_type.value_or("");
  p.illumination_id = s.illumination_id.value_or("");
  p.source = network_pixels(s.source);
  p.target = network_pixels(s.target);
  return p;
}

/// Loads and prepares the given ids (deduplicated, in the order given).
inline std::map<std::string, PreparedSample> prepare_ids(const data::DatasetIndex& index,
                                                         const std::vector<std::string>& ids,
                                                         const ModalityInConfig& in_cfg) {
  const auto lookup = index.by_id();
  const auto sidecar = data::read_sidecar(index.root);
  std::map<std::string, PreparedSample> out;
  for (const auto& id : ids) {
    if (out.count(id)) continue;
    const auto it = lookup.find(id);
    if (it == lookup.end()) throw std::out_of_range("unknown sample id '" + id + "'");
    out.emplace(id, prepare(data::load_sample(index, *it->second), in_cfg, sidecar ? &*sidecar : nullptr));
  }
  return out;
}

/// Source and target tensors [B,1,128,128] of the given samples.
inline std::pair<Tensor<float>, Tensor<float>> assemble(const std::vector<const PreparedSample*>& batch) {
  const int b = static_cast<int>(batch.size());
  Tensor<float> src({b, 1, kImageSize, kImageSize}), tgt({b, 1, kImageSize, kImageSize});
  for (int i = 0; i < b; ++i) {
    std::copy(batch[i]->source.begin(), batch[i]->source.end(), src.sample(i));
    std::copy(batch[i]->target.begin(), batch[i]->target.end(), tgt.sample(i));
  }
  return {std::move(src), std::move(tgt)};
}

}  // namespace amtpad::pipeline
