#pragma once

// Exact minimum-cost assignment of K sources (rows) to S >= K slots
// (columns), via the potential-based Hungarian method in O(K^2 S).

#include "slotdep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace slotdep {

struct MatchResult {
  std::vector<int> assignment;  // assignment[k] = slot matched to source k
  double matched_cost = 0.0;
  std::vector<int> unmatched_slots;  // ascending
};

namespace detail {

// Rectangular Hungarian (rows <= cols), 1-based potentials formulation.
inline std::vector<int> hungarian_core(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) assign[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  return assign;
}

inline double assignment_cost(const Matrix& cost, const std::vector<int>& a) {
  double c = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) c += cost(static_cast<Index>(k), a[k]);
  return c;
}

inline double optimal_cost(const Matrix& cost) {
  if (cost.rows() == 0) return 0.0;
  return assignment_cost(cost, hungarian_core(cost));
}

}  // namespace detail

/// Minimizes sum_k cost(k, sigma(k)) over injective sigma. Among optimal
/// assignments (ties within 1e-12 relative), the lexicographically smallest
/// slot vector wins, so results do not depend on floating-point path details.
inline MatchResult hungarian(const Matrix& cost) {
  const Index K = cost.rows();
  const Index S = cost.cols();
  if (K > S) {
    throw std::invalid_argument("hungarian: more sources (" + std::to_string(K) + ") than slots (" +
                                std::to_string(S) + ")");
  }
  require_finite(cost, "hungarian");
  MatchResult res;
  if (K == 0) {
    for (int s = 0; s < S; ++s) res.unmatched_slots.push_back(s);
    return res;
  }
  const double best = detail::optimal_cost(cost);
  const double tol = 1e-12 * std::max(1.0, std::abs(best));

  // Fix rows one at a time to the smallest slot that still admits an optimum.
  std::vector<int> assign(static_cast<std::size_t>(K), -1);
  std::vector<char> taken(static_cast<std::size_t>(S), 0);
  double prefix = 0.0;
  for (Index k = 0; k < K; ++k) {
    for (Index s = 0; s < S; ++s) {
      if (taken[static_cast<std::size_t>(s)]) continue;
      // Remaining rows k+1.. over remaining columns excluding s.
      std::vector<Index> cols;
      for (Index c = 0; c < S; ++c) {
        if (!taken[static_cast<std::size_t>(c)] && c != s) cols.push_back(c);
      }
      const Index rest = K - k - 1;
      Matrix sub(rest, static_cast<Index>(cols.size()));
      for (Index r = 0; r < rest; ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) sub(r, static_cast<Index>(c)) = cost(k + 1 + r, cols[c]);
      }
      const double total = prefix + cost(k, s) + detail::optimal_cost(sub);
      if (total <= best + tol) {
        assign[static_cast<std::size_t>(k)] = static_cast<int>(s);
        taken[static_cast<std::size_t>(s)] = 1;
        prefix += cost(k, s);
        break;
      }
    }
    if (assign[static_cast<std::size_t>(k)] < 0) {
      // Tolerance edge case; fall back to the raw solver output.
      assign = detail::hungarian_core(cost);
      break;
    }
  }
  res.assignment = assign;
  res.matched_cost = detail::assignment_cost(cost, assign);
  std::vector<char> used(static_cast<std::size_t>(S), 0);
  for (int s : assign) used[static_cast<std::size_t>(s)] = 1;
  for (int s = 0; s < S; ++s) {
    if (!used[static_cast<std::size_t>(s)]) res.unmatched_slots.push_back(s);
  }
  return res;
}

}  // namespace slotdep
