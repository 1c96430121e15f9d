#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/fusion_disc.hpp"
#include "amtpad/losses.hpp"
#include "amtpad/plgf.hpp"
#include "amtpad/translator.hpp"

namespace amtpad::pipeline {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a training run depends on. Defaults are the full-size model
/// with the published optimisation settings.
struct TrainConfig {
  TranslatorConfig translator;
  DiscriminatorConfig discriminator;
  LossWeights loss;
  ModalityInConfig modality_in;
  Supervision supervision = Supervision::V0;
  FusionOp fusion_op = FusionOp::Concat;
  double lr = 1e-4;
  int batch_size = 32;
  int lr_decay_period = 10;
  double lr_decay_factor = 0.5;
  int max_epochs = 30;
  int genuine_upsampling = 4;
  std::uint64_t seed = 1;
  std::string protocol = "grand-test";
  double target_bpcer = 0.01;

  void validate() const {
    translator.validate();
    discriminator.validate();
    loss.validate();
    modality_in.validate();
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (batch_size < 4) throw ConfigError("batch_size must be >= 4 (two genuine and one attack per batch)");
    if (lr_decay_period < 1 || !(lr_decay_factor > 0)) throw ConfigError("invalid learning-rate schedule");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (genuine_upsampling < 1) throw ConfigError("genuine_upsampling must be >= 1");
    if (target_bpcer < 0 || target_bpcer > 1) throw ConfigError("target_bpcer must be in [0,1]");
  }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  N out{};
  is >> out;
  if (!is || !(is >> std::ws).eof()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Reads and writes one config field by name.
struct Field {
  std::string key;
  bool model;  ///< part of the network or its input contract
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename M>
Field int_field(std::string key, bool model, M member) {
  return {key, model, [key, member](TrainConfig& c, const std::string& v) { member(c) = parse_number<int>(key, v); },
          [member](TrainConfig c) { return std::to_string(member(c)); }};
}
template <typename M>
Field double_field(std::string key, bool model, M member) {
  return {key, model, [key, member](TrainConfig& c, const std::string& v) { member(c) = parse_number<double>(key, v); },
          [member](TrainConfig c) { return format_double(member(c)); }};
}
template <typename M>
Field bool_field(std::string key, bool model, M member) {
  return {key, model, [key, member](TrainConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
          [member](TrainConfig c) { return std::string(member(c) ? "true" : "false"); }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(int_field("base_width", true, [](TrainConfig& c) -> int& { return c.translator.base_width; }));
    v.push_back(int_field("latent_channels", true, [](TrainConfig& c) -> int& { return c.translator.latent_channels; }));
    v.push_back(int_field("n_translation_blocks", true, [](TrainConfig& c) -> int& { return c.translator.n_translation_blocks; }));
    v.push_back(bool_field("with_translation_block", true, [](TrainConfig& c) -> bool& { return c.translator.with_translation_block; }));
    v.push_back(int_field("projector_width", true, [](TrainConfig& c) -> int& { return c.translator.projector_width; }));
    v.push_back(int_field("embedding_dim", true, [](TrainConfig& c) -> int& { return c.translator.embedding_dim; }));
    v.push_back(int_field("disc_init_features", true, [](TrainConfig& c) -> int& { return c.discriminator.init_features; }));
    v.push_back(int_field("disc_growth_rate", true, [](TrainConfig& c) -> int& { return c.discriminator.growth_rate; }));
    v.push_back(int_field("disc_bn_size", true, [](TrainConfig& c) -> int& { return c.discriminator.bn_size; }));
    v.push_back(int_field("disc_block1_layers", true, [](TrainConfig& c) -> int& { return c.discriminator.block1_layers; }));
    v.push_back(int_field("disc_block2_layers", true, [](TrainConfig& c) -> int& { return c.discriminator.block2_layers; }));
    v.push_back({"fusion_op", true, [](TrainConfig& c, const std::string& s) { c.fusion_op = parse_fusion_op(s); },
                 [](const TrainConfig& c) { return to_string(c.fusion_op); }});
    v.push_back(bool_field("source_plgf", true, [](TrainConfig& c) -> bool& { return c.modality_in.source_plgf; }));
    v.push_back(bool_field("target_plgf", true, [](TrainConfig& c) -> bool& { return c.modality_in.target_plgf; }));
    v.push_back(double_field("plgf_epsilon", true, [](TrainConfig& c) -> double& { return c.modality_in.epsilon; }));
    v.push_back(int_field("plgf_mask_size", true, [](TrainConfig& c) -> int& { return c.modality_in.mask_size; }));
    v.push_back(bool_field("plgf_rescale", true, [](TrainConfig& c) -> bool& { return c.modality_in.rescale_to_unit; }));
    v.push_back({"supervision", false, [](TrainConfig& c, const std::string& s) { c.supervision = parse_supervision(s); },
                 [](const TrainConfig& c) { return to_string(c.supervision); }});
    v.push_back(double_field("lambda1", false, [](TrainConfig& c) -> double& { return c.loss.lambda1; }));
    v.push_back(double_field("lambda2", false, [](TrainConfig& c) -> double& { return c.loss.lambda2; }));
    v.push_back(double_field("lambda3", false, [](TrainConfig& c) -> double& { return c.loss.lambda3; }));
    v.push_back(double_field("tau", false, [](TrainConfig& c) -> double& { return c.loss.tau; }));
    v.push_back(double_field("c_trunc", false, [](TrainConfig& c) -> double& { return c.loss.c_trunc; }));
    v.push_back(double_field("v1_constant", false, [](TrainConfig& c) -> double& { return c.loss.v1_constant; }));
    v.push_back(bool_field("denominator_includes_positives", false,
                           [](TrainConfig& c) -> bool& { return c.loss.denominator_includes_positives; }));
    v.push_back(double_field("lr", false, [](TrainConfig& c) -> double& { return c.lr; }));
    v.push_back(int_field("batch_size", false, [](TrainConfig& c) -> int& { return c.batch_size; }));
    v.push_back(int_field("lr_decay_period", false, [](TrainConfig& c) -> int& { return c.lr_decay_period; }));
    v.push_back(double_field("lr_decay_factor", false, [](TrainConfig& c) -> double& { return c.lr_decay_factor; }));
    v.push_back(int_field("max_epochs", false, [](TrainConfig& c) -> int& { return c.max_epochs; }));
    v.push_back(int_field("genuine_upsampling", false, [](TrainConfig& c) -> int& { return c.genuine_upsampling; }));
    v.push_back({"seed", false, [](TrainConfig& c, const std::string& s) { c.seed = parse_number<std::uint64_t>("seed", s); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    v.push_back({"protocol", false, [](TrainConfig& c, const std::string& s) { c.protocol = s; },
                 [](const TrainConfig& c) { return c.protocol; }});
    v.push_back(double_field("target_bpcer", false, [](TrainConfig& c) -> double& { return c.target_bpcer; }));
    return v;
  }();
  return f;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void set_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields())
    if (f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies "key=value" text: one assignment per line, '#' starts a comment.
inline void apply_text(TrainConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    set_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  apply_text(cfg, text);
  cfg.validate();
  return cfg;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Every field, one "key = value" line each, in a fixed order.
inline std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// Keys describing the network or its inputs that differ between a and b.
inline std::vector<std::string> model_mismatches(const TrainConfig& a, const TrainConfig& b) {
  std::vector<std::string> out;
  for (const auto& f : detail::fields())
    if (f.model && f.get(a) != f.get(b)) out.push_back(f.key + " (" + f.get(a) + " vs " + f.get(b) + ")");
  return out;
}

}  // namespace amtpad::pipeline
