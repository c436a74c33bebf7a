#pragma once

// Collapse metrics and parameter-recovery scores.
//
// Peak overlap looks at the first K slots by index and flags a sample when
// two of them share an argmax token. Max active overlap takes, per sample,
// the largest cosine between attention rows of active slots. Both are
// undefined (std::nullopt) when no sample qualifies.

#include "slotdep/heads.hpp"
#include "slotdep/hungarian.hpp"
#include "slotdep/tensor.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace slotdep {

struct AttentionSample {
  Matrix attention;             // S x L, raw rows
  std::vector<double> exist;    // S existence logits
  int k = 0;                    // true source count
};

using AttentionBatch = std::vector<AttentionSample>;

/// Lowest index among maximal entries of row r.
inline Index argmax_row(const Matrix& m, Index r) {
  Index best = 0;
  for (Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return best;
}

inline bool has_peak_collision(const AttentionSample& s) {
  if (s.k > s.attention.rows()) throw std::invalid_argument("peak overlap: K exceeds slot count");
  std::vector<Index> peaks;
  for (int i = 0; i < s.k; ++i) {
    const Index p = argmax_row(s.attention, i);
    for (Index q : peaks) {
      if (q == p) return true;
    }
    peaks.push_back(p);
  }
  return false;
}

inline std::optional<double> peak_overlap_rate(const AttentionBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("peak_overlap_rate: empty batch");
  int multi = 0, flagged = 0;
  for (const auto& s : batch) {
    if (s.k < 2) continue;
    ++multi;
    flagged += has_peak_collision(s) ? 1 : 0;
  }
  if (multi == 0) return std::nullopt;
  return static_cast<double>(flagged) / multi;
}

inline double row_cosine(const Matrix& m, Index i, Index j) {
  const double ni = m.row(i).norm(), nj = m.row(j).norm();
  if (ni == 0.0 || nj == 0.0) return 0.0;
  return m.row(i).dot(m.row(j)) / (ni * nj);
}

/// Largest pairwise cosine among active slots, or nullopt if fewer than two.
inline std::optional<double> sample_max_active_overlap(const AttentionSample& s) {
  std::vector<Index> active;
  for (std::size_t i = 0; i < s.exist.size(); ++i) {
    if (is_active(s.exist[i])) active.push_back(static_cast<Index>(i));
  }
  if (active.size() < 2) return std::nullopt;
  double best = -1.0;
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = a + 1; b < active.size(); ++b) best = std::max(best, row_cosine(s.attention, active[a], active[b]));
  }
  return best;
}

inline std::optional<double> max_active_overlap(const AttentionBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("max_active_overlap: empty batch");
  double sum = 0.0;
  int n = 0;
  for (const auto& s : batch) {
    if (auto v = sample_max_active_overlap(s)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Closed-form CRPS of N(mu, sigma^2) at y.
inline double crps_gaussian(double mu, double sigma, double y) {
  if (!(sigma > 0.0)) throw std::invalid_argument("crps_gaussian: sigma must be > 0");
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

/// Fraction of slots whose active flag equals their matched status.
inline double existence_accuracy(const std::vector<std::vector<double>>& logits,
                                 const std::vector<MatchResult>& matches) {
  if (logits.size() != matches.size()) throw std::invalid_argument("existence_accuracy: size mismatch");
  int agree = 0, total = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    std::vector<char> matched(logits[b].size(), 0);
    for (int s : matches[b].assignment) matched[static_cast<std::size_t>(s)] = 1;
    for (std::size_t s = 0; s < logits[b].size(); ++s) {
      agree += (is_active(logits[b][s]) == (matched[s] != 0)) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(agree) / total;
}

/// Fraction of true sources assigned to some slot.
inline double completeness(const std::vector<MatchResult>& matches, const std::vector<int>& source_counts) {
  if (matches.size() != source_counts.size()) throw std::invalid_argument("completeness: size mismatch");
  long hit = 0, total = 0;
  for (std::size_t b = 0; b < matches.size(); ++b) {
    total += source_counts[b];
    for (int s : matches[b].assignment) hit += s >= 0 ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

struct CollapseReport {
  std::optional<double> peak_overlap_rate;
  std::optional<double> max_active_overlap;
  int n_multi_source = 0;
  int n_samples = 0;
};

inline CollapseReport collapse_report(const AttentionBatch& batch) {
  CollapseReport r;
  r.n_samples = static_cast<int>(batch.size());
  for (const auto& s : batch) r.n_multi_source += s.k >= 2 ? 1 : 0;
  if (!batch.empty()) {
    r.peak_overlap_rate = peak_overlap_rate(batch);
    r.max_active_overlap = max_active_overlap(batch);
  }
  return r;
}

}  // namespace slotdep
