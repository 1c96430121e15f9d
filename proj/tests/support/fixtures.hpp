#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "amtpad/losses.hpp"
#include "oracles.hpp"

namespace testing_support {

struct BatchPair {
  amtpad::LabeledBatch<double> batch;
  oracle::Batch flat;
};

/// Random labels with at least two genuine and one attack sample.
inline std::vector<int> mixed_labels(std::mt19937_64& rng, int b) {
  std::vector<int> y(b);
  std::bernoulli_distribution coin(0.5);
  for (;;) {
    int g = 0;
    for (auto& v : y) g += (v = coin(rng) ? 1 : 0) == 0;
    if (g >= 2 && g < b) return y;
  }
}

/// Images in network range, unit-norm embeddings, patch maps in (0,1).
inline BatchPair random_batch(std::mt19937_64& rng, std::vector<int> labels, int side = 128, int dim = 128,
                              int grid = 8) {
  const int b = static_cast<int>(labels.size());
  std::uniform_real_distribution<double> img(-1.0, 1.0), patch(0.01, 0.99);
  std::normal_distribution<double> normal;
  BatchPair out;
  auto& lb = out.batch;
  lb.translated = amtpad::Tensor<double>({b, 1, side, side});
  lb.target = amtpad::Tensor<double>({b, 1, side, side});
  lb.embeddings = amtpad::Tensor<double>({b, dim});
  lb.patch_maps = amtpad::Tensor<double>({b, 1, grid, grid});
  lb.labels = labels;
  for (auto& v : lb.translated.values()) v = img(rng);
  for (auto& v : lb.target.values()) v = img(rng);
  for (int n = 0; n < b; ++n) {
    double norm = 0;
    for (int k = 0; k < dim; ++k) norm += std::pow(lb.embeddings.at(n, k) = normal(rng), 2);
    for (int k = 0; k < dim; ++k) lb.embeddings.at(n, k) /= std::sqrt(norm);
  }
  for (auto& v : lb.patch_maps.values()) v = patch(rng);

  auto& f = out.flat;
  f.b = b;
  f.pixels = side * side;
  f.translated.assign(lb.translated.values().begin(), lb.translated.values().end());
  f.target.assign(lb.target.values().begin(), lb.target.values().end());
  f.dim = dim;
  f.embeddings.assign(lb.embeddings.values().begin(), lb.embeddings.values().end());
  f.patch_count = grid * grid;
  f.patches.assign(lb.patch_maps.values().begin(), lb.patch_maps.values().end());
  f.labels = labels;
  return out;
}

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-12});
}

}  // namespace testing_support
