#pragma once

#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "amtpad/data/dataset.hpp"
#include "amtpad/data/image_io.hpp"
#include "amtpad/plgf.hpp"

namespace amtpad::data {

/// Records which modalities of a stored dataset already hold PLGF output
/// and the factor that maps the descriptor range [0, π/2) to the stored [0,1).
struct PreprocessSidecar {
  bool source_plgf = false;
  bool target_plgf = false;
  double epsilon = 1e-6;
  int mask_size = 5;
  double stored_scale = 2.0 / std::numbers::pi;
};

inline constexpr const char* kSidecarName = "preprocess.json";

inline std::optional<PreprocessSidecar> read_sidecar(const std::filesystem::path& root) {
  const auto path = root / kSidecarName;
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  PreprocessSidecar s;
  j.at("source_plgf").get_to(s.source_plgf);
  j.at("target_plgf").get_to(s.target_plgf);
  j.at("epsilon").get_to(s.epsilon);
  j.at("mask_size").get_to(s.mask_size);
  j.at("stored_scale").get_to(s.stored_scale);
  return s;
}

inline void write_sidecar(const std::filesystem::path& root, const PreprocessSidecar& s) {
  std::ofstream(root / kSidecarName) << nlohmann::json{{"source_plgf", s.source_plgf},
                                                       {"target_plgf", s.target_plgf},
                                                       {"epsilon", s.epsilon},
                                                       {"mask_size", s.mask_size},
                                                       {"stored_scale", s.stored_scale}}
                                            .dump(2)
                                     << '\n';
}

/// Applies the PLGF to the flagged modalities of every sample under `in_root`
/// and writes an 8-bit copy of the dataset (same manifest) under `out_root`.
/// Returns the number of samples written.
inline std::size_t preprocess_dataset(const std::filesystem::path& in_root, const std::filesystem::path& out_root,
                                      ModalityInConfig cfg) {
  cfg.validate();
  cfg.rescale_to_unit = true;
  if (read_sidecar(in_root)) throw std::invalid_argument(in_root.string() + " is already preprocessed");
  const auto [index, report] = load_dataset_index(in_root);
  if (!report.skipped.empty())
    throw std::runtime_error(std::to_string(report.skipped.size()) + " manifest rows reference missing files");
  for (const auto& r : index.records) {
    const BiModalSample s = normalize_sample(load_sample(index, r, 0), cfg);
    write_gray(out_root / r.source_path, s.source);
    write_gray(out_root / r.target_path, s.target);
  }
  write_manifest(out_root, index.records);
  write_sidecar(out_root, {cfg.source_plgf, cfg.target_plgf, cfg.epsilon, cfg.mask_size, 2.0 / std::numbers::pi});
  return index.records.size();
}

}  // namespace amtpad::data
