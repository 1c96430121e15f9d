#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "amtpad/metrics.hpp"
#include "oracles.hpp"

using namespace amtpad;

namespace {

/// Random set with both classes; `levels` > 0 quantises scores to force ties.
ScoreSet random_set(std::mt19937_64& rng, int n, int levels = 0) {
  ScoreSet s;
  std::uniform_real_distribution<double> u;
  std::bernoulli_distribution coin(0.5);
  do {
    s.scores.clear();
    s.labels.clear();
    for (int i = 0; i < n; ++i) {
      const int y = coin(rng);
      double v = u(rng) + 0.3 * y;
      if (levels > 0) v = std::round(v * levels) / levels;
      s.scores.push_back(v);
      s.labels.push_back(y);
    }
  } while (s.count(0) == 0 || s.count(1) == 0);
  return s;
}

ScoreSet transformed(ScoreSet s) {
  for (auto& v : s.scores) v = std::exp(3 * v) + v;
  return s;
}

}  // namespace

TEST(Threshold, DegenerateGenuineDistribution) {
  ScoreSet s{std::vector<double>(100, 0.1), std::vector<int>(100, 0)};
  const double t = threshold_at_bpcer(s, 0.01);
  EXPECT_GT(t, 0.1);
  EXPECT_EQ(t, std::nextafter(0.1, 1.0));
}

TEST(Threshold, SortedOrderRule) {
  ScoreSet s;
  for (int k = 1; k <= 100; ++k) {
    s.scores.push_back(0.01 * k);
    s.labels.push_back(0);
  }
  EXPECT_DOUBLE_EQ(threshold_at_bpcer(s, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(threshold_at_bpcer(s, 1.0), 0.01);
  EXPECT_EQ(threshold_at_bpcer(s, 0.01), oracle::threshold(s.scores, s.labels, 0.01));
}

TEST(Threshold, Errors) {
  ScoreSet s{{0.1, 0.2}, {1, 1}};
  EXPECT_THROW(threshold_at_bpcer(s), std::invalid_argument);
  ScoreSet bad{{0.1}, {0, 1}};
  EXPECT_THROW(threshold_at_bpcer(bad), std::invalid_argument);
}

TEST(ErrorRates, Trivial) {
  ScoreSet s{{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}};
  const auto r = apcer_bpcer_acer(s, 0.5);
  EXPECT_EQ(r.apcer, 0.0);
  EXPECT_EQ(r.bpcer, 0.0);
  const auto all = apcer_bpcer_acer(s, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(all.apcer, 0.0);
  EXPECT_EQ(all.bpcer, 1.0);
  EXPECT_EQ(all.acer, 0.5);
}

TEST(Auc, TrivialCases) {
  EXPECT_EQ(roc_auc({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}), 1.0);
  EXPECT_EQ(roc_auc({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}), 0.5);
  EXPECT_THROW(roc_auc({{0.5, 0.5}, {0, 0}}), std::invalid_argument);
}

TEST(Eer, TrivialCases) {
  EXPECT_EQ(eer({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}), 0.0);
  EXPECT_NEAR(eer({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}), 0.5, 1e-12);
}

TEST(Tdr, TrivialCases) {
  ScoreSet s{{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}};
  EXPECT_EQ(tdr_at_fdr(s, 0.01), 1.0);
  EXPECT_EQ(tdr_at_fdr(s, 1.0), 1.0);
}

TEST(Tdr, InterleavedClasses) {
  ScoreSet s;
  for (int k = 0; k < 200; ++k) {
    s.scores.push_back(k);
    s.labels.push_back(k % 2);
  }
  EXPECT_NEAR(tdr_at_fdr(s, 0.01), oracle::tdr(s.scores, s.labels, 0.01), 1e-12);
  EXPECT_NEAR(tdr_at_fdr(s, 0.1), oracle::tdr(s.scores, s.labels, 0.1), 1e-12);
}

class MetricOracles : public ::testing::TestWithParam<int> {};

TEST_P(MetricOracles, RandomSetsMatch) {
  std::mt19937_64 rng(1000 + GetParam());
  const int levels = GetParam() % 3 == 0 ? 10 : 0;
  const ScoreSet dev = random_set(rng, 40 + GetParam(), levels);
  const ScoreSet test = random_set(rng, 30 + GetParam(), levels);
  EXPECT_EQ(roc_auc(test), oracle::auc(test.scores, test.labels));
  const double theta = threshold_at_bpcer(dev, 0.05);
  EXPECT_EQ(theta, oracle::threshold(dev.scores, dev.labels, 0.05));
  const auto r = apcer_bpcer_acer(test, theta);
  const auto o = oracle::rates(test.scores, test.labels, theta);
  EXPECT_EQ(r.apcer, o.apcer);
  EXPECT_EQ(r.bpcer, o.bpcer);
  EXPECT_EQ(r.acer, (r.apcer + r.bpcer) / 2);
  EXPECT_NEAR(eer(test), oracle::eer(test.scores, test.labels), 1e-6);
  EXPECT_NEAR(tdr_at_fdr(test, 0.01), oracle::tdr(test.scores, test.labels, 0.01), 1e-12);
  EXPECT_NEAR(tdr_at_fdr(test, 0.2), oracle::tdr(test.scores, test.labels, 0.2), 1e-12);
}

TEST_P(MetricOracles, MonotoneTransformInvariance) {
  std::mt19937_64 rng(2000 + GetParam());
  const int levels = GetParam() % 2 == 0 ? 8 : 0;
  const ScoreSet dev = random_set(rng, 50, levels), test = random_set(rng, 50, levels);
  const ScoreSet dev2 = transformed(dev), test2 = transformed(test);
  EXPECT_EQ(roc_auc(test), roc_auc(test2));
  EXPECT_NEAR(eer(test), eer(test2), 1e-12);
  EXPECT_EQ(tdr_at_fdr(test), tdr_at_fdr(test2));
  const auto a = apcer_bpcer_acer(test, threshold_at_bpcer(dev));
  const auto b = apcer_bpcer_acer(test2, threshold_at_bpcer(dev2));
  EXPECT_EQ(a.apcer, b.apcer);
  EXPECT_EQ(a.bpcer, b.bpcer);
}

TEST_P(MetricOracles, NegationAndPermutation) {
  std::mt19937_64 rng(3000 + GetParam());
  ScoreSet s = random_set(rng, 37, GetParam() % 2 ? 6 : 0);
  ScoreSet neg = s;
  for (auto& v : neg.scores) v = -v;
  EXPECT_NEAR(roc_auc(neg), 1.0 - roc_auc(s), 1e-15);
  std::vector<std::size_t> perm(s.scores.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ScoreSet p;
  for (auto i : perm) {
    p.scores.push_back(s.scores[i]);
    p.labels.push_back(s.labels[i]);
  }
  EXPECT_EQ(roc_auc(p), roc_auc(s));
  EXPECT_EQ(eer(p), eer(s));
  EXPECT_EQ(tdr_at_fdr(p), tdr_at_fdr(s));
  EXPECT_EQ(threshold_at_bpcer(p), threshold_at_bpcer(s));
}

INSTANTIATE_TEST_SUITE_P(Seeds, MetricOracles, ::testing::Range(0, 20));

TEST(Report, AcerIsMeanAndJsonRoundTrip) {
  std::mt19937_64 rng(9);
  const auto dev = random_set(rng, 60), test = random_set(rng, 60);
  const auto r = evaluate_scores(dev, test);
  EXPECT_EQ(r.acer, (r.apcer + r.bpcer) / 2);
  EXPECT_EQ(r.n_genuine + r.n_attack, 60u);
  for (double v : {r.apcer, r.bpcer, r.acer, r.eer, r.auc, r.tdr_at_fdr1}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  nlohmann::json j = r;
  const MetricReport back = j.get<MetricReport>();
  EXPECT_EQ(back.auc, r.auc);
  EXPECT_EQ(back.threshold, r.threshold);
  EXPECT_EQ(back.n_attack, r.n_attack);
}

TEST(Report, RocPolylineEndpoints) {
  const auto poly = roc_polyline({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}});
  EXPECT_EQ(poly.front(), (std::pair<double, double>{1.0, 1.0}));
  EXPECT_EQ(poly.back(), (std::pair<double, double>{0.0, 0.0}));
}
