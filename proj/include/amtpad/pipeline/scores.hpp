#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "amtpad/fusion_disc.hpp"
#include "amtpad/metrics.hpp"

namespace amtpad::pipeline {

struct ScoreRow {
  std::string sample_id;
  double score = 0.0;
  int label = 0;
  std::string attack_type;
  std::string illumination_id;
};

inline constexpr const char* kScoreHeader = "sample_id,score,label,attack_type,illumination_id";

inline ScoreSet to_score_set(const std::vector<ScoreRow>& rows) {
  ScoreSet s;
  for (const auto& r : rows) {
    s.scores.push_back(r.score);
    s.labels.push_back(r.label);
  }
  return s;
}

/// Scores are printed with 17 significant digits so they read back exactly.
inline void write_score_csv(std::ostream& out, const std::vector<ScoreRow>& rows) {
  out << kScoreHeader << '\n';
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    out << r.sample_id << ',' << buf << ',' << r.label << ',' << r.attack_type << ',' << r.illumination_id << '\n';
  }
}

inline void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_score_csv(out, rows);
}

inline std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.substr(0, line.find_last_not_of("\r") + 1) != kScoreHeader)
    throw std::runtime_error(path.string() + ": header must be '" + std::string(kScoreHeader) + "'");
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
    ScoreRow r;
    r.sample_id = f[0];
    try {
      std::size_t used = 0;
      r.score = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad score '" + f[1] + "'");
    }
    if (f[2] != "0" && f[2] != "1") throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad label");
    r.label = f[2] == "1";
    r.attack_type = f[3];
    r.illumination_id = f[4];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Mean score per sample_id over several score files (inner join). Labels
/// must agree; rows follow the order of the first file.
inline std::vector<ScoreRow> fuse_score_rows(const std::vector<std::vector<ScoreRow>>& models) {
  if (models.empty()) throw std::invalid_argument("fuse_score_rows needs at least one score list");
  std::vector<std::map<std::string, const ScoreRow*>> lookup(models.size());
  for (std::size_t m = 0; m < models.size(); ++m)
    for (const auto& r : models[m])
      if (!lookup[m].emplace(r.sample_id, &r).second)
        throw std::invalid_argument("duplicate sample_id '" + r.sample_id + "' in score list " + std::to_string(m));
  std::vector<ScoreRow> out;
  for (const auto& r : models.front()) {
    std::vector<double> scores;
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto it = lookup[m].find(r.sample_id);
      if (it == lookup[m].end()) break;
      if (it->second->label != r.label)
        throw std::invalid_argument("label of '" + r.sample_id + "' differs between score lists");
      scores.push_back(it->second->score);
    }
    if (scores.size() != models.size()) continue;
    ScoreRow f = r;
    f.score = fuse_scores(scores);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace amtpad::pipeline
