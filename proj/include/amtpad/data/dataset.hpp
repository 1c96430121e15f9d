#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/data/image_io.hpp"
#include "amtpad/image.hpp"
#include "amtpad/translator.hpp"

namespace amtpad::data {

/// One manifest row: a lazily loaded sample (paths relative to the root).
struct SampleRecord {
  std::string sample_id;
  std::string source_path;
  std::string target_path;
  int label = 0;
  std::optional<std::string> attack_type;
  std::optional<std::string> illumination_id;
  Subset subset = Subset::Train;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<SampleRecord> records;

  const SampleRecord& find(const std::string& id) const {
    for (const auto& r : records)
      if (r.sample_id == id) return r;
    throw std::out_of_range("unknown sample id '" + id + "'");
  }
  std::map<std::string, const SampleRecord*> by_id() const {
    std::map<std::string, const SampleRecord*> m;
    for (const auto& r : records) m.emplace(r.sample_id, &r);
    return m;
  }
};

struct LoadIssue {
  std::string sample_id;
  std::string message;
};

struct LoadReport {
  std::size_t rows = 0;
  std::vector<LoadIssue> skipped;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestHeader =
    "sample_id,source_path,target_path,label,attack_type,illumination_id,subset";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::optional<std::string> optional_tag(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  return s;
}

}  // namespace detail

/// Parses one manifest row; throws ManifestError on malformed content.
inline SampleRecord parse_manifest_row(const std::string& line, std::size_t line_no) {
  auto fields = detail::split_csv_line(line);
  auto fail = [&](const std::string& why) {
    throw ManifestError("manifest line " + std::to_string(line_no) + ": " + why);
  };
  if (fields.size() != 7) fail("expected 7 columns, got " + std::to_string(fields.size()));
  for (auto& f : fields) f = detail::trim(f);
  SampleRecord r;
  r.sample_id = fields[0];
  r.source_path = fields[1];
  r.target_path = fields[2];
  if (r.sample_id.empty()) fail("empty sample_id");
  if (fields[3] == "0") r.label = 0;
  else if (fields[3] == "1") r.label = 1;
  else fail("label must be 0 or 1, got '" + fields[3] + "'");
  r.attack_type = detail::optional_tag(fields[4]);
  r.illumination_id = detail::optional_tag(fields[5]);
  if (r.attack_type.has_value() != (r.label == 1)) fail("attack_type must be present exactly for attack rows");
  try {
    r.subset = parse_subset(fields[6]);
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return r;
}

/// Reads root/manifest.csv. Rows whose image files are missing are skipped
/// and reported; malformed rows and duplicate ids are hard errors.
inline std::pair<DatasetIndex, LoadReport> load_dataset_index(const std::filesystem::path& root) {
  const auto manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw ManifestError("cannot open " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kManifestHeader)
    throw ManifestError(manifest.string() + ": header must be '" + std::string(kManifestHeader) + "'");
  DatasetIndex index;
  index.root = root;
  LoadReport report;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    SampleRecord r = parse_manifest_row(line, line_no);
    ++report.rows;
    if (!seen.insert(r.sample_id).second) throw ManifestError("duplicate sample_id '" + r.sample_id + "'");
    std::string missing;
    for (const auto* p : {&r.source_path, &r.target_path})
      if (!std::filesystem::exists(root / *p)) missing += (missing.empty() ? "" : ", ") + *p;
    if (!missing.empty()) {
      report.skipped.push_back({r.sample_id, "missing image file(s): " + missing});
      continue;
    }
    index.records.push_back(std::move(r));
  }
  return {std::move(index), std::move(report)};
}

inline void write_manifest(const std::filesystem::path& root, const std::vector<SampleRecord>& records) {
  std::filesystem::create_directories(root);
  std::ofstream out(root / "manifest.csv");
  if (!out) throw ManifestError("cannot write manifest in " + root.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records)
    out << r.sample_id << ',' << r.source_path << ',' << r.target_path << ',' << r.label << ','
        << r.attack_type.value_or("") << ',' << r.illumination_id.value_or("") << ',' << to_string(r.subset) << '\n';
}

/// Loads both images of a record, resized to the network input size.
inline BiModalSample load_sample(const DatasetIndex& index, const SampleRecord& r, int size = kImageSize) {
  BiModalSample s;
  s.sample_id = r.sample_id;
  s.source = read_gray(index.root / r.source_path, size);
  s.target = read_gray(index.root / r.target_path, size);
  s.label = r.label;
  s.attack_type = r.attack_type;
  s.illumination_id = r.illumination_id;
  s.subset = r.subset;
  return s;
}

}  // namespace amtpad::data
