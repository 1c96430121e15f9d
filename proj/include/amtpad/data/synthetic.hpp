#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/data/dataset.hpp"
#include "amtpad/data/image_io.hpp"
#include "amtpad/image.hpp"

namespace amtpad::data {

/// Relations available for synthetic attacks. Each replaces the genuine
/// source→target transform with a different one:
///   print   flat target (no depth/thermal structure)
///   replay  target follows the transform of the inverted face
///   mask    source is inverted while the target looks genuine
///   gamma   mismatched intensity power law
///   blur    much stronger blur than genuine
///   shift   target spatially misregistered
///   noise   heavy sensor noise on the target
inline const std::vector<std::string>& known_attack_types() {
  static const std::vector<std::string> types{"print", "replay", "mask", "gamma", "blur", "shift", "noise"};
  return types;
}

struct SyntheticConfig {
  int n_genuine = 500;
  int n_attacks_per_type = 250;
  std::vector<std::string> attack_types{"print", "replay", "mask", "gamma"};
  std::vector<double> illumination_levels{0.3, 0.45, 0.6, 0.75, 0.9, 1.05, 1.2};
  /// Index into illumination_levels that only attack samples may use; -1 for none.
  int no_genuine_illumination = -1;
  /// Genuine transform: `blur_passes` 3×3 binomial blurs, then x ↦ x^gamma.
  double gamma = 0.6;
  int blur_passes = 1;
  double noise_sigma = 0.005;
  std::uint64_t seed = 7;
  int image_size = 128;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;

  void validate() const {
    if (n_genuine <= 0) throw std::invalid_argument("synthetic dataset needs at least one genuine sample");
    if (n_attacks_per_type < 0) throw std::invalid_argument("n_attacks_per_type must be >= 0");
    for (const auto& t : attack_types)
      if (std::find(known_attack_types().begin(), known_attack_types().end(), t) == known_attack_types().end())
        throw std::invalid_argument("unknown synthetic attack type '" + t + "'");
    if (illumination_levels.empty()) throw std::invalid_argument("need at least one illumination level");
    for (double l : illumination_levels)
      if (!(l > 0.0)) throw std::invalid_argument("illumination levels must be positive");
    if (no_genuine_illumination >= static_cast<int>(illumination_levels.size()))
      throw std::invalid_argument("no_genuine_illumination out of range");
    if (no_genuine_illumination >= 0 && illumination_levels.size() < 2)
      throw std::invalid_argument("genuine samples need at least one usable illumination level");
    if (!(gamma > 0.0) || blur_passes < 0) throw std::invalid_argument("invalid genuine transform parameters");
    if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
    if (image_size < 16) throw std::invalid_argument("image_size must be >= 16");
    if (train_fraction <= 0 || dev_fraction < 0 || train_fraction + dev_fraction >= 1)
      throw std::invalid_argument("subset fractions must leave room for a test subset");
  }

  std::size_t total() const { return static_cast<std::size_t>(n_genuine) + attack_types.size() * n_attacks_per_type; }
};

inline std::string illumination_tag(std::size_t level_index) { return "illum" + std::to_string(level_index + 1); }

namespace detail {

inline GrayImage binomial_blur(const GrayImage& img, int passes) {
  GrayImage cur = img;
  GrayImage tmp(img.height, img.width);
  for (int k = 0; k < passes; ++k) {
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) {
        const int l = std::max(c - 1, 0), h = std::min(c + 1, img.width - 1);
        tmp.at(r, c) = 0.25 * cur.at(r, l) + 0.5 * cur.at(r, c) + 0.25 * cur.at(r, h);
      }
    for (int r = 0; r < img.height; ++r) {
      const int u = std::max(r - 1, 0), d = std::min(r + 1, img.height - 1);
      for (int c = 0; c < img.width; ++c) cur.at(r, c) = 0.25 * tmp.at(u, c) + 0.5 * tmp.at(r, c) + 0.25 * tmp.at(d, c);
    }
  }
  return cur;
}

inline GrayImage power(GrayImage img, double gamma) {
  for (auto& v : img.pixels) v = std::pow(std::max(v, 0.0), gamma);
  return img;
}

inline double gauss2(double u, double v, double cu, double cv, double su, double sv) {
  const double a = (u - cu) / su, b = (v - cv) / sv;
  return std::exp(-0.5 * (a * a + b * b));
}

inline constexpr double kFaceMin = 0.02;
inline constexpr double kFaceMax = 0.72;

/// Procedural face-like albedo map in [kFaceMin, kFaceMax].
inline GrayImage synth_face(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  const double bg = uni(0.04, 0.1);
  const double cx = uni(-0.08, 0.08), cy = uni(-0.08, 0.08);
  const double ax = uni(0.55, 0.7), ay = uni(0.7, 0.85);
  const double albedo = uni(0.35, 0.6);
  const double eye_dx = uni(0.25, 0.35) * ax, eye_y = cy - uni(0.2, 0.3) * ay;
  const double eye_depth = uni(0.35, 0.6) * albedo;
  const double mouth_y = cy + uni(0.4, 0.5) * ay, mouth_w = uni(0.15, 0.25);
  struct Blob {
    double u, v, s, amp;
  };
  std::vector<Blob> texture;
  for (int k = 0; k < 4; ++k) texture.push_back({cx + uni(-0.5, 0.5) * ax, cy + uni(-0.5, 0.5) * ay, uni(0.1, 0.3), uni(-0.08, 0.08)});

  GrayImage f(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double u = 2.0 * (c + 0.5) / size - 1.0, v = 2.0 * (r + 0.5) / size - 1.0;
      const double rad = std::hypot((u - cx) / ax, (v - cy) / ay);
      const double inside = 1.0 / (1.0 + std::exp(-(1.0 - rad) / 0.04));
      double face = albedo;
      face -= eye_depth * (gauss2(u, v, cx - eye_dx, eye_y, 0.08, 0.05) + gauss2(u, v, cx + eye_dx, eye_y, 0.08, 0.05));
      face += 0.1 * gauss2(u, v, cx, cy + 0.05, 0.06, 0.12);
      face -= 0.5 * albedo * gauss2(u, v, cx, mouth_y, mouth_w, 0.04);
      for (const auto& b : texture) face += b.amp * gauss2(u, v, b.u, b.v, b.s, b.s);
      f.at(r, c) = std::clamp(bg + inside * (face - bg), kFaceMin, kFaceMax);
    }
  return f;
}

inline GrayImage invert_face(GrayImage f) {
  for (auto& v : f.pixels) v = kFaceMin + kFaceMax - v;
  return f;
}

inline GrayImage shift_columns(const GrayImage& img, int dx) {
  GrayImage out(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, std::clamp(c - dx, 0, img.width - 1));
  return out;
}

}  // namespace detail

/// Source→target transform shared by every genuine pair.
inline GrayImage genuine_transform(const GrayImage& source, const SyntheticConfig& cfg) {
  return detail::power(detail::binomial_blur(source, cfg.blur_passes), cfg.gamma);
}

/// Deterministic in (cfg, index): samples are ordered genuine first, then
/// each attack type in turn. Images are kept in double precision, clamped
/// to [0,1]; the subset is assigned by generate_synthetic_samples.
inline BiModalSample synthesize_sample(const SyntheticConfig& cfg, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::mt19937_64 rng(seq);
  BiModalSample s;
  const bool genuine = index < static_cast<std::size_t>(cfg.n_genuine);
  std::string type;
  if (genuine) {
    s.sample_id = "g" + std::to_string(index);
  } else {
    const std::size_t k = index - cfg.n_genuine;
    type = cfg.attack_types.at(k / cfg.n_attacks_per_type);
    s.sample_id = "a-" + type + "-" + std::to_string(k % cfg.n_attacks_per_type);
    s.label = 1;
    s.attack_type = type;
  }

  std::vector<std::size_t> levels;
  for (std::size_t l = 0; l < cfg.illumination_levels.size(); ++l)
    if (!genuine || static_cast<int>(l) != cfg.no_genuine_illumination) levels.push_back(l);
  const std::size_t level = levels[std::uniform_int_distribution<std::size_t>(0, levels.size() - 1)(rng)];
  s.illumination_id = illumination_tag(level);
  const double light = cfg.illumination_levels[level];

  const GrayImage face = detail::synth_face(rng, cfg.image_size);
  GrayImage source = face, target;
  double noise = cfg.noise_sigma;
  if (genuine) {
    target = genuine_transform(face, cfg);
  } else if (type == "print") {
    target = GrayImage(cfg.image_size, cfg.image_size, std::uniform_real_distribution<double>(0.25, 0.55)(rng));
  } else if (type == "replay") {
    target = genuine_transform(detail::invert_face(face), cfg);
  } else if (type == "mask") {
    source = detail::invert_face(face);
    target = genuine_transform(face, cfg);
  } else if (type == "gamma") {
    target = detail::power(detail::binomial_blur(face, cfg.blur_passes), 2.2);
  } else if (type == "blur") {
    target = detail::power(detail::binomial_blur(face, cfg.blur_passes + 8), cfg.gamma);
  } else if (type == "shift") {
    target = detail::shift_columns(genuine_transform(face, cfg), 8);
  } else {
    target = genuine_transform(face, cfg);
    noise = std::max(noise, 0.06);
  }

  std::normal_distribution<double> N(0.0, 1.0);
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double n = noise > 0 ? noise * N(rng) : 0.0;
    target.pixels[k] = std::clamp(light * (target.pixels[k] + n), 0.0, 1.0);
    source.pixels[k] = std::clamp(light * source.pixels[k], 0.0, 1.0);
  }
  s.source = std::move(source);
  s.target = std::move(target);
  return s;
}

/// Subset of every sample index. Genuine samples and each attack type are
/// split separately (seeded shuffle, then train/dev/test by fraction), so
/// every class keeps its proportions even in tiny datasets.
inline std::vector<Subset> assign_subsets(const SyntheticConfig& cfg) {
  std::vector<Subset> out(cfg.total(), Subset::Test);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const auto split_group = [&](std::size_t begin, std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = begin + i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    const auto n_dev = static_cast<std::size_t>(std::llround(cfg.dev_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n; ++k)
      out[order[k]] = k < n_train ? Subset::Train : (k < n_train + n_dev ? Subset::Dev : Subset::Test);
  };
  const auto per_type = static_cast<std::size_t>(cfg.n_attacks_per_type);
  split_group(0, static_cast<std::size_t>(cfg.n_genuine));
  for (std::size_t t = 0; t < cfg.attack_types.size(); ++t) split_group(cfg.n_genuine + t * per_type, per_type);
  return out;
}

/// The whole dataset in memory (double precision, before 8-bit storage).
inline std::vector<BiModalSample> generate_synthetic_samples(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto subsets = assign_subsets(cfg);
  std::vector<BiModalSample> out;
  out.reserve(cfg.total());
  for (std::size_t i = 0; i < cfg.total(); ++i) {
    out.push_back(synthesize_sample(cfg, i));
    out.back().subset = subsets[i];
  }
  return out;
}

/// Manifest record of an in-memory sample, with the paths the writer uses.
inline SampleRecord record_of(const BiModalSample& s) {
  SampleRecord r;
  r.sample_id = s.sample_id;
  r.source_path = "source/" + s.sample_id + ".png";
  r.target_path = "target/" + s.sample_id + ".png";
  r.label = s.label;
  r.attack_type = s.attack_type;
  r.illumination_id = s.illumination_id;
  r.subset = s.subset;
  return r;
}

/// Writes root/manifest.csv plus source/ and target/ PNGs.
inline DatasetIndex generate_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& root) {
  const auto samples = generate_synthetic_samples(cfg);
  DatasetIndex index;
  index.root = root;
  for (const auto& s : samples) {
    SampleRecord r = record_of(s);
    write_gray(root / r.source_path, s.source);
    write_gray(root / r.target_path, s.target);
    index.records.push_back(std::move(r));
  }
  write_manifest(root, index.records);
  return index;
}

}  // namespace amtpad::data
