#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "amtpad/data/protocols.hpp"
#include "amtpad/data/synthetic.hpp"

namespace testing_support {

using amtpad::Subset;
using amtpad::data::DatasetIndex;
using amtpad::data::ProtocolSplit;
using amtpad::data::SampleRecord;

/// Scans every record of the index against a split and returns one message
/// per violated rule. `expected(r)` names the subset a record must be in, or
/// nothing when the split must exclude it.
template <typename Expected>
std::vector<std::string> audit_split(const DatasetIndex& index, const ProtocolSplit& split, Expected expected) {
  std::vector<std::string> errors;
  std::map<std::string, std::vector<Subset>> where;
  for (const auto& id : split.train_ids) where[id].push_back(Subset::Train);
  for (const auto& id : split.dev_ids) where[id].push_back(Subset::Dev);
  for (const auto& id : split.test_ids) where[id].push_back(Subset::Test);
  for (const auto& [id, subsets] : where)
    if (subsets.size() > 1) errors.push_back(split.name + ": " + id + " appears in several subsets");
  std::set<std::string> known;
  for (const SampleRecord& r : index.records) {
    known.insert(r.sample_id);
    const std::optional<Subset> want = expected(r);
    const auto it = where.find(r.sample_id);
    if (!want && it != where.end()) errors.push_back(split.name + ": " + r.sample_id + " should be excluded");
    if (want && (it == where.end() || it->second.front() != *want))
      errors.push_back(split.name + ": " + r.sample_id + " missing from " + amtpad::to_string(*want));
  }
  for (const auto& [id, _] : where)
    if (!known.count(id)) errors.push_back(split.name + ": unknown id " + id);
  return errors;
}

/// Held-out attack types: genuine everywhere, other attacks only in train/dev,
/// held-out attacks only in test.
inline std::vector<std::string> audit_held_out(const DatasetIndex& index, const ProtocolSplit& split,
                                               const std::set<std::string>& held) {
  auto errors = audit_split(index, split, [&](const SampleRecord& r) -> std::optional<Subset> {
    if (r.label == 0) return r.subset;
    const bool is_held = held.count(*r.attack_type) > 0;
    if (r.subset == Subset::Test) return is_held ? std::optional<Subset>(Subset::Test) : std::nullopt;
    return is_held ? std::nullopt : std::optional<Subset>(r.subset);
  });
  const auto lookup = index.by_id();
  for (const auto* ids : {&split.train_ids, &split.dev_ids})
    for (const auto& id : *ids) {
      const auto* r = lookup.at(id);
      if (r->attack_type && held.count(*r->attack_type)) errors.push_back(split.name + ": held-out type in train/dev");
    }
  bool genuine[3] = {false, false, false};
  const std::vector<std::string>* lists[3] = {&split.train_ids, &split.dev_ids, &split.test_ids};
  for (int s = 0; s < 3; ++s)
    for (const auto& id : *lists[s]) {
      const auto* r = lookup.at(id);
      if (r->label == 0) genuine[s] = true;
      if (s == 2 && r->label == 1 && !held.count(*r->attack_type))
        errors.push_back(split.name + ": seen attack type in test");
    }
  for (bool g : genuine)
    if (!g) errors.push_back(split.name + ": a subset has no genuine sample");
  return errors;
}

/// Held-out illumination: only that tag in test, none of it in train/dev.
inline std::vector<std::string> audit_illumination(const DatasetIndex& index, const ProtocolSplit& split,
                                                   const std::string& tag) {
  auto errors = audit_split(index, split, [&](const SampleRecord& r) -> std::optional<Subset> {
    const bool is_held = r.illumination_id == tag;
    if (r.subset == Subset::Test) return is_held ? std::optional<Subset>(Subset::Test) : std::nullopt;
    return is_held ? std::nullopt : std::optional<Subset>(r.subset);
  });
  const auto lookup = index.by_id();
  for (const auto& id : split.test_ids)
    if (lookup.at(id)->illumination_id != tag) errors.push_back(split.name + ": foreign illumination in test");
  for (const auto* ids : {&split.train_ids, &split.dev_ids})
    for (const auto& id : *ids)
      if (lookup.at(id)->illumination_id == tag) errors.push_back(split.name + ": held illumination in train/dev");
  return errors;
}

/// Records of a small synthetic dataset with all seven attack types and seven
/// illumination levels, the fourth of which has no genuine sample.
inline DatasetIndex audit_index(std::uint64_t seed = 3) {
  amtpad::data::SyntheticConfig cfg;
  cfg.n_genuine = 140;
  cfg.n_attacks_per_type = 30;
  cfg.attack_types = amtpad::data::known_attack_types();
  cfg.no_genuine_illumination = 3;
  cfg.image_size = 16;
  cfg.seed = seed;
  DatasetIndex index;
  for (const auto& s : amtpad::data::generate_synthetic_samples(cfg)) index.records.push_back(amtpad::data::record_of(s));
  return index;
}

}  // namespace testing_support
