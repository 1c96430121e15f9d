#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/fusion_disc.hpp"
#include "amtpad/pipeline/config.hpp"
#include "amtpad/translator.hpp"

namespace amtpad::pipeline {

/// Translator + discriminator of one bi-modality model.
template <typename T>
class Model {
 public:
  explicit Model(const TrainConfig& cfg) : cfg_(cfg), translator_(cfg.translator), discriminator_(cfg.discriminator) {
    cfg_.validate();
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  Translator<T>& translator() noexcept { return translator_; }
  const Translator<T>& translator() const noexcept { return translator_; }
  Discriminator<T>& discriminator() noexcept { return discriminator_; }
  const Discriminator<T>& discriminator() const noexcept { return discriminator_; }

  void reset_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    translator_.reset_parameters(rng);
    discriminator_.reset_parameters(rng);
  }

  std::vector<nn::StateEntry<T>> state() {
    std::vector<nn::StateEntry<T>> out;
    translator_.collect_state("translator", out);
    discriminator_.collect_state("discriminator", out);
    return out;
  }

  /// Inference on network-range inputs: translated images and patch maps.
  std::pair<Tensor<T>, Tensor<T>> infer(const Tensor<T>& source, const Tensor<T>& target) const {
    Tensor<T> translated = translator_.translate(source);
    Tensor<T> patches = discriminator_.discriminate(fuse(cfg_.fusion_op, translated, target));
    return {std::move(translated), std::move(patches)};
  }

 private:
  TrainConfig cfg_;
  Translator<T> translator_;
  Discriminator<T> discriminator_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'M', 'T', 'P', 'A', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}
inline std::string get_string(std::istream& in, std::uint64_t limit = 1u << 26) {
  const auto n = get<std::uint64_t>(in);
  if (n > limit) throw CheckpointError("corrupt checkpoint (string too long)");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw CheckpointError("truncated checkpoint");
  return s;
}

}  // namespace detail

struct CheckpointInfo {
  std::uint32_t version = 0;
  TrainConfig config;
  int epoch = 0;
};

/// Binary layout: magic, version, config text, epoch, then named float32
/// tensors (name, rank, dims, values).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model, int epoch) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put_string(out, to_text(model.config()));
    detail::put<std::int32_t>(out, epoch);
    const auto state = model.state();
    detail::put<std::uint64_t>(out, state.size());
    for (const auto& e : state) {
      detail::put_string(out, e.name);
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value->rank()));
      for (int d : e.value->shape()) detail::put<std::int32_t>(out, d);
      for (T v : e.value->values()) detail::put<float>(out, static_cast<float>(v));
    }
    if (!out) throw CheckpointError("error while writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline CheckpointInfo read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint");
  CheckpointInfo info;
  info.version = get<std::uint32_t>(in);
  if (info.version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(info.version));
  info.config = parse_config(get_string(in));
  info.epoch = get<std::int32_t>(in);
  return info;
}

}  // namespace detail

inline CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return detail::read_header(in, path);
}

/// Rebuilds the model recorded in a checkpoint.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, int* epoch = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const CheckpointInfo info = detail::read_header(in, path);
  Model<T> model(info.config);
  auto state = model.state();
  std::map<std::string, nn::StateEntry<T>*> by_name;
  for (auto& e : state) by_name[e.name] = &e;
  const auto n = detail::get<std::uint64_t>(in);
  if (n != state.size())
    throw CheckpointError(path.string() + ": " + std::to_string(n) + " tensors, model expects " +
                          std::to_string(state.size()));
  for (std::uint64_t k = 0; k < n; ++k) {
    const std::string name = detail::get_string(in);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(path.string() + ": unexpected tensor '" + name + "'");
    const auto rank = detail::get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get<std::int32_t>(in);
    Tensor<T>& dst = *it->second->value;
    if (shape != dst.shape())
      throw CheckpointError(path.string() + ": tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                            to_string(dst.shape()));
    for (auto& v : dst.values()) v = static_cast<T>(detail::get<float>(in));
    by_name.erase(it);
  }
  if (epoch) *epoch = info.epoch;
  return model;
}

}  // namespace amtpad::pipeline
