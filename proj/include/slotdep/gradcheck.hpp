#pragma once

#include "slotdep/autodiff.hpp"
#include "slotdep/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace slotdep {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates = 0;
};

using ScalarGraph = std::function<Var(Tape&, ParameterStore&)>;

/// Compares tape gradients against central differences for every scalar in
/// `point`. The graph builder must be a deterministic function of the store.
/// Error per coordinate: |a - n| / (|a| + |n| + 1e-12).
inline GradCheckResult grad_check(const ScalarGraph& f, ParameterStore& point, double step) {
  point.zero_grad();
  {
    Tape tape(true);
    Var loss = f(tape, point);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(false);
    return f(tape, point).scalar();
  };
  GradCheckResult res;
  for (auto& e : point) {
    for (Index i = 0; i < e.value.size(); ++i) {
      double& x = e.value.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = eval();
      x = saved - step;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = e.grad.data()[i];
      const double err = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
      ++res.coordinates;
      if (err > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_parameter = e.name;
        res.worst_index = i;
        res.analytic_at_worst = analytic;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace slotdep
