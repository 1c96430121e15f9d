#pragma once

#include <cmath>
#include <vector>

#include "amtpad/nn/layer.hpp"

namespace amtpad::nn {

/// Adaptive-moment optimiser over a fixed set of parameters.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<StateEntry<T>> params, Options opts) : opts_(opts) {
    for (auto& p : params) {
      if (!p.trainable()) continue;
      params_.push_back(p);
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }

  void set_lr(double lr) noexcept { opts_.lr = lr; }
  double lr() const noexcept { return opts_.lr; }
  long steps() const noexcept { return step_; }

  void zero_grad() {
    for (auto& p : params_) p.grad->zero();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    const double step_size = opts_.lr / bc1;
    const double sqrt_bc2 = std::sqrt(bc2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      T* w = params_[k].value->data();
      const T* g = params_[k].grad->data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1 - opts_.beta2) * static_cast<double>(g[i]) * g[i];
        w[i] -= static_cast<T>(step_size * m[i] / (std::sqrt(v[i]) / sqrt_bc2 + opts_.eps));
      }
    }
  }

 private:
  Options opts_;
  std::vector<StateEntry<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

/// Learning rate for a 1-based epoch under "halve every `period` epochs".
inline double step_decay_lr(double base_lr, int epoch, int period = 10, double factor = 0.5) {
  const int drops = epoch > 0 ? (epoch - 1) / period : 0;
  return base_lr * std::pow(factor, drops);
}

}  // namespace amtpad::nn
