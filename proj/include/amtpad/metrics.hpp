#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace amtpad {

/// Scores with their labels (0 genuine, 1 attack). Higher score = more attack-like.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const {
    if (scores.size() != labels.size()) throw std::invalid_argument("ScoreSet: scores and labels differ in length");
    for (int y : labels)
      if (y != 0 && y != 1) throw std::invalid_argument("ScoreSet: labels must be 0 or 1");
    for (double s : scores)
      if (std::isnan(s)) throw std::invalid_argument("ScoreSet: NaN score");
  }
  std::vector<double> of_class(int label) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (labels[i] == label) out.push_back(scores[i]);
    return out;
  }
  std::size_t count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }
};

struct ErrorRates {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};

struct MetricReport {
  double threshold = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  double eer = 0.0;
  double auc = 0.0;
  double tdr_at_fdr1 = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_attack = 0;
};

/// Smallest threshold θ such that the fraction of genuine scores ≥ θ is at
/// most `target_bpcer`. Candidates are the distinct genuine scores; if none
/// qualifies, the next double above the largest genuine score is returned.
inline double threshold_at_bpcer(const ScoreSet& dev, double target_bpcer = 0.01) {
  dev.validate();
  std::vector<double> g = dev.of_class(0);
  if (g.empty()) throw std::invalid_argument("threshold_at_bpcer needs at least one genuine score");
  if (target_bpcer < 0.0 || target_bpcer > 1.0) throw std::invalid_argument("target BPCER must be in [0,1]");
  std::sort(g.begin(), g.end());
  const double allowed = target_bpcer * static_cast<double>(g.size()) + 1e-9;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i > 0 && g[i] == g[i - 1]) continue;
    if (static_cast<double>(g.size() - i) <= allowed) return g[i];
  }
  return std::nextafter(g.back(), std::numeric_limits<double>::infinity());
}

/// Decision rule: score ≥ θ is flagged as attack.
inline ErrorRates apcer_bpcer_acer(const ScoreSet& test, double threshold) {
  test.validate();
  std::size_t att = 0, missed = 0, gen = 0, flagged = 0;
  for (std::size_t i = 0; i < test.scores.size(); ++i) {
    if (test.labels[i] == 1) {
      ++att;
      if (test.scores[i] < threshold) ++missed;
    } else {
      ++gen;
      if (test.scores[i] >= threshold) ++flagged;
    }
  }
  ErrorRates r;
  r.apcer = att ? static_cast<double>(missed) / static_cast<double>(att) : 0.0;
  r.bpcer = gen ? static_cast<double>(flagged) / static_cast<double>(gen) : 0.0;
  r.acer = (r.apcer + r.bpcer) / 2;
  return r;
}

/// P(attack score > genuine score) + ½ P(tie), computed exactly by sorting.
inline double roc_auc(const ScoreSet& test) {
  test.validate();
  std::vector<double> g = test.of_class(0), a = test.of_class(1);
  if (g.empty() || a.empty()) throw std::invalid_argument("roc_auc needs both classes");
  std::sort(g.begin(), g.end());
  // twice the Mann-Whitney U: 2·wins + ties, exact in integers
  std::uint64_t twice_u = 0;
  for (double s : a) {
    const auto lo = std::lower_bound(g.begin(), g.end(), s);
    const auto hi = std::upper_bound(lo, g.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - g.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(g.size()) * static_cast<double>(a.size()));
}

/// Error-rate pairs (APCER, BPCER) at every distinct score and at +∞, in
/// increasing threshold order. APCER rises from 0 to 1, BPCER falls from 1 to 0.
inline std::vector<std::pair<double, double>> error_rate_curve(const ScoreSet& test) {
  test.validate();
  std::vector<double> g = test.of_class(0), a = test.of_class(1);
  if (g.empty() || a.empty()) throw std::invalid_argument("error-rate curve needs both classes");
  std::sort(g.begin(), g.end());
  std::sort(a.begin(), a.end());
  std::vector<double> cands = test.scores;
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  cands.push_back(std::numeric_limits<double>::infinity());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(cands.size());
  const double ng = static_cast<double>(g.size()), na = static_cast<double>(a.size());
  for (double t : cands) {
    const auto below_a = std::lower_bound(a.begin(), a.end(), t) - a.begin();
    const auto below_g = std::lower_bound(g.begin(), g.end(), t) - g.begin();
    curve.emplace_back(static_cast<double>(below_a) / na, (ng - static_cast<double>(below_g)) / ng);
  }
  return curve;
}

/// Equal error rate: where APCER(θ) = BPCER(θ), linearly interpolated between
/// the two bracketing thresholds of the sweep.
inline double eer(const ScoreSet& test) {
  const auto curve = error_rate_curve(test);
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const auto [ap, bp] = curve[k];
    if (ap == bp) return ap;
    if (ap > bp) {
      // crossing lies between k-1 (ap < bp) and k; k = 0 cannot happen as curve[0].first = 0
      const auto [ap0, bp0] = curve[k - 1];
      const double d0 = bp0 - ap0, d1 = ap - bp;
      const double t = d0 / (d0 + d1);
      return ap0 + t * (ap - ap0);
    }
  }
  return curve.back().first;
}

/// Fraction of attacks flagged at the operating threshold whose genuine
/// false-flag rate is at most `fdr` (the threshold of threshold_at_bpcer).
inline double tdr_at_fdr(const ScoreSet& test, double fdr = 0.01) {
  const double theta = threshold_at_bpcer(test, fdr);
  const auto a = test.of_class(1);
  if (a.empty()) throw std::invalid_argument("tdr_at_fdr needs at least one attack score");
  const auto hit = std::count_if(a.begin(), a.end(), [&](double s) { return s >= theta; });
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

/// (FDR, TDR) at every distinct threshold, from (1,1) down to (0,0).
inline std::vector<std::pair<double, double>> roc_polyline(const ScoreSet& test) {
  const auto curve = error_rate_curve(test);
  std::vector<std::pair<double, double>> out;
  out.reserve(curve.size());
  for (const auto& [ap, bp] : curve) out.emplace_back(bp, 1.0 - ap);
  return out;
}

/// Threshold calibrated on `dev`, everything else measured on `test`.
inline MetricReport evaluate_scores(const ScoreSet& dev, const ScoreSet& test, double target_bpcer = 0.01) {
  MetricReport r;
  r.threshold = threshold_at_bpcer(dev, target_bpcer);
  const ErrorRates er = apcer_bpcer_acer(test, r.threshold);
  r.apcer = er.apcer;
  r.bpcer = er.bpcer;
  r.acer = er.acer;
  r.eer = eer(test);
  r.auc = roc_auc(test);
  r.tdr_at_fdr1 = tdr_at_fdr(test, 0.01);
  r.n_genuine = test.count(0);
  r.n_attack = test.count(1);
  return r;
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"threshold", r.threshold}, {"apcer", r.apcer},           {"bpcer", r.bpcer},
                     {"acer", r.acer},           {"eer", r.eer},               {"auc", r.auc},
                     {"tdr_at_fdr1", r.tdr_at_fdr1}, {"n_genuine", r.n_genuine}, {"n_attack", r.n_attack}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  j.at("threshold").get_to(r.threshold);
  j.at("apcer").get_to(r.apcer);
  j.at("bpcer").get_to(r.bpcer);
  j.at("acer").get_to(r.acer);
  j.at("eer").get_to(r.eer);
  j.at("auc").get_to(r.auc);
  j.at("tdr_at_fdr1").get_to(r.tdr_at_fdr1);
  j.at("n_genuine").get_to(r.n_genuine);
  j.at("n_attack").get_to(r.n_attack);
}

}  // namespace amtpad
