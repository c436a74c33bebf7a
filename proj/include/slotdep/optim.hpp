#pragma once

#include "slotdep/params.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace slotdep {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are allocated lazily on the first step and
/// keyed by the store's insertion order.
class Adam {
 public:
  explicit Adam(AdamSettings settings = {}) : settings_(settings) {}

  void step(ParameterStore& store) {
    if (first_.empty()) {
      for (const auto& e : store) {
        first_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
        second_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
      }
    }
    if (first_.size() != store.size()) throw std::logic_error("Adam: parameter set changed between steps");
    ++steps_;
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    std::size_t i = 0;
    for (auto& e : store) {
      Matrix& m = first_[i];
      Matrix& v = second_[i];
      m = b1 * m + (1.0 - b1) * e.grad;
      v = b2 * v + (1.0 - b2) * e.grad.cwiseAbs2();
      e.value.array() -= settings_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + settings_.epsilon);
      ++i;
    }
  }

  std::int64_t steps() const { return steps_; }
  const AdamSettings& settings() const { return settings_; }

 private:
  AdamSettings settings_;
  std::int64_t steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store) sq += e.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& e : store) e.grad *= f;
  }
  return norm;
}

}  // namespace slotdep
