#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amtpad/data/dataset.hpp"

namespace amtpad::data {

struct ProtocolSplit {
  std::string name;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
  std::string filter_description;

  const std::vector<std::string>& ids(Subset s) const {
    return s == Subset::Train ? train_ids : (s == Subset::Dev ? dev_ids : test_ids);
  }
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ProtocolError if an id occurs twice within or across the subsets.
inline void check_disjoint(const ProtocolSplit& split) {
  std::set<std::string> seen;
  for (auto s : {Subset::Train, Subset::Dev, Subset::Test})
    for (const auto& id : split.ids(s))
      if (!seen.insert(id).second) throw ProtocolError(split.name + ": sample '" + id + "' occurs more than once");
}

namespace detail {

template <typename Keep>
ProtocolSplit filtered_split(const DatasetIndex& index, std::string name, std::string description, Keep keep) {
  ProtocolSplit split;
  split.name = std::move(name);
  split.filter_description = std::move(description);
  for (const auto& r : index.records) {
    if (!keep(r)) continue;
    (r.subset == Subset::Train ? split.train_ids : (r.subset == Subset::Dev ? split.dev_ids : split.test_ids))
        .push_back(r.sample_id);
  }
  check_disjoint(split);
  return split;
}

}  // namespace detail

/// Distinct attack types in first-appearance order.
inline std::vector<std::string> attack_types(const DatasetIndex& index) {
  std::vector<std::string> out;
  for (const auto& r : index.records)
    if (r.attack_type && std::find(out.begin(), out.end(), *r.attack_type) == out.end()) out.push_back(*r.attack_type);
  return out;
}

/// Distinct illumination tags in first-appearance order.
inline std::vector<std::string> illumination_ids(const DatasetIndex& index) {
  std::vector<std::string> out;
  for (const auto& r : index.records)
    if (r.illumination_id && std::find(out.begin(), out.end(), *r.illumination_id) == out.end())
      out.push_back(*r.illumination_id);
  return out;
}

/// Every sample in the subset its manifest row names.
inline ProtocolSplit make_grand_test_split(const DatasetIndex& index) {
  return detail::filtered_split(index, "grand-test", "all samples, subsets as tagged",
                                [](const SampleRecord&) { return true; });
}

/// Train/dev drop the held-out types; test keeps genuine samples and only
/// the held-out types.
inline ProtocolSplit make_held_out_split(const DatasetIndex& index, const std::vector<std::string>& held_out,
                                         std::string name) {
  const auto present = attack_types(index);
  for (const auto& t : held_out)
    if (std::find(present.begin(), present.end(), t) == present.end())
      throw ProtocolError(name + ": attack type '" + t + "' does not occur in the index");
  auto is_held = [&](const SampleRecord& r) {
    return r.attack_type && std::find(held_out.begin(), held_out.end(), *r.attack_type) != held_out.end();
  };
  std::string desc = "held out:";
  for (const auto& t : held_out) desc += " " + t;
  return detail::filtered_split(index, std::move(name), desc, [&](const SampleRecord& r) {
    if (r.label == 0) return true;
    return r.subset == Subset::Test ? is_held(r) : !is_held(r);
  });
}

/// One leave-one-out split per attack type.
inline std::vector<ProtocolSplit> make_loo_attack_splits(const DatasetIndex& index) {
  std::vector<ProtocolSplit> out;
  for (const auto& t : attack_types(index)) out.push_back(make_held_out_split(index, {t}, "loo-" + t));
  return out;
}

/// Leave-three-out: exactly three held-out attack types.
inline ProtocolSplit make_lto_split(const DatasetIndex& index, const std::vector<std::string>& held_out) {
  if (held_out.size() != 3 || std::set<std::string>(held_out.begin(), held_out.end()).size() != 3)
    throw ProtocolError("LTO needs three distinct attack types");
  return make_held_out_split(index, held_out, "lto-" + held_out[0] + "-" + held_out[1] + "-" + held_out[2]);
}

/// Train/dev drop one illumination tag; test holds only that tag. Tags
/// without a genuine test sample yield no split.
inline std::vector<ProtocolSplit> make_cross_illumination_splits(const DatasetIndex& index) {
  std::vector<ProtocolSplit> out;
  for (const auto& tag : illumination_ids(index)) {
    const bool has_genuine_test = std::any_of(index.records.begin(), index.records.end(), [&](const SampleRecord& r) {
      return r.label == 0 && r.subset == Subset::Test && r.illumination_id == tag;
    });
    if (!has_genuine_test) continue;
    out.push_back(detail::filtered_split(index, "illum-" + tag, "held out illumination: " + tag,
                                         [&](const SampleRecord& r) {
                                           const bool held = r.illumination_id == tag;
                                           return r.subset == Subset::Test ? held : !held;
                                         }));
  }
  return out;
}

/// Resolves a protocol name: grand-test, loo-<type>, lto-<a>-<b>-<c>
/// (types without '-'), illum-<tag>.
inline ProtocolSplit make_split(const DatasetIndex& index, const std::string& protocol) {
  if (protocol == "grand-test") return make_grand_test_split(index);
  if (protocol.rfind("loo-", 0) == 0) return make_held_out_split(index, {protocol.substr(4)}, protocol);
  if (protocol.rfind("lto-", 0) == 0) {
    std::vector<std::string> types;
    std::string rest = protocol.substr(4), part;
    std::istringstream is(rest);
    while (std::getline(is, part, '-')) types.push_back(part);
    return make_lto_split(index, types);
  }
  if (protocol.rfind("illum-", 0) == 0) {
    const std::string tag = protocol.substr(6);
    for (auto& s : make_cross_illumination_splits(index))
      if (s.name == protocol) return s;
    throw ProtocolError("illumination '" + tag + "' is unknown or has no genuine test sample");
  }
  throw ProtocolError("unknown protocol '" + protocol + "'");
}

/// Each genuine id repeated `factor` times; attack ids kept once.
inline std::vector<std::string> upsample_genuine(const DatasetIndex& index, const std::vector<std::string>& train_ids,
                                                 int factor) {
  if (factor < 1) throw std::invalid_argument("upsampling factor must be >= 1");
  const auto lookup = index.by_id();
  std::vector<std::string> out;
  out.reserve(train_ids.size() * static_cast<std::size_t>(factor));
  for (const auto& id : train_ids) {
    const auto it = lookup.find(id);
    if (it == lookup.end()) throw std::out_of_range("unknown sample id '" + id + "'");
    const int reps = it->second->label == 0 ? factor : 1;
    for (int k = 0; k < reps; ++k) out.push_back(id);
  }
  return out;
}

inline nlohmann::json split_to_json(const ProtocolSplit& s) {
  return {{"name", s.name},
          {"filter", s.filter_description},
          {"train", s.train_ids},
          {"dev", s.dev_ids},
          {"test", s.test_ids}};
}

inline ProtocolSplit split_from_json(const nlohmann::json& j) {
  ProtocolSplit s;
  j.at("name").get_to(s.name);
  j.at("filter").get_to(s.filter_description);
  j.at("train").get_to(s.train_ids);
  j.at("dev").get_to(s.dev_ids);
  j.at("test").get_to(s.test_ids);
  check_disjoint(s);
  return s;
}

}  // namespace amtpad::data
