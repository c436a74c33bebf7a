#pragma once

// Gradient-dominance check for two additive components.
//
// Tokens h_l = A1 w1_l h1 + A2 w2_l h2 with orthonormal h1, h2. The own-logit
// part of d alpha_l / d q is alpha_l (1 - alpha_l) k_l / (tau sqrt d) with
// k_l = W_k (e_l h_l). Summed over tokens it splits into a W_k h1 part and a
// W_k h2 part; the report gives the cosine of the sum with each direction,
// before and after the token where the dominant component peaks is depleted
// to the evidence floor.

#include "slotdep/autodiff.hpp"
#include "slotdep/tensor.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace slotdep {

struct TwoComponentTokens {
  RowVector h1, h2;   // unit, orthogonal
  RowVector w1, w2;   // per-token profiles (length L)
  double a1 = 1.0, a2 = 1.0;

  Matrix tokens() const {
    Matrix t(w1.size(), h1.size());
    for (Index l = 0; l < w1.size(); ++l) t.row(l) = a1 * w1(l) * h1 + a2 * w2(l) * h2;
    return t;
  }
};

struct DirectionCosines {
  double dominant = 0.0;   // cos(g, W_k h1)
  double secondary = 0.0;  // cos(g, W_k h2)
};

inline double cosine(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// Attention of query q (1 x d) with evidence keys and log-evidence bias.
inline RowVector evidence_alpha(const RowVector& q, const Matrix& wk, const Matrix& tokens, const RowVector& evidence,
                                double gamma, double tau) {
  const double scale = 1.0 / (tau * std::sqrt(static_cast<double>(q.size())));
  Matrix logits(1, tokens.rows());
  for (Index l = 0; l < tokens.rows(); ++l) {
    const RowVector k = evidence(l) * (tokens.row(l) * wk);
    logits(0, l) = scale * q.dot(k) + gamma * std::log(evidence(l));
  }
  return ad::softmax_rows_value(logits).row(0);
}

/// sum_l alpha_l (1 - alpha_l) e_l (h_l W_k) / (tau sqrt d); W_k acts on
/// row vectors from the right, matching the library's h W convention.
inline RowVector own_logit_gradient(const RowVector& q, const Matrix& wk, const Matrix& tokens,
                                    const RowVector& evidence, double gamma, double tau) {
  const RowVector alpha = evidence_alpha(q, wk, tokens, evidence, gamma, tau);
  const double scale = 1.0 / (tau * std::sqrt(static_cast<double>(q.size())));
  RowVector g = RowVector::Zero(wk.cols());
  for (Index l = 0; l < tokens.rows(); ++l) {
    g += alpha(l) * (1.0 - alpha(l)) * scale * evidence(l) * (tokens.row(l) * wk);
  }
  return g;
}

inline DirectionCosines direction_cosines(const RowVector& g, const Matrix& wk, const TwoComponentTokens& t) {
  return {cosine(g, t.h1 * wk), cosine(g, t.h2 * wk)};
}

/// Random instance: Gaussian-bump profile (plus a 0.2 floor) for the dominant
/// component, U[0.5, 1] per token for the other.
inline TwoComponentTokens random_two_component(Index L, Index d, double ratio, std::mt19937_64& rng) {
  if (d < 2) throw std::invalid_argument("random_two_component: d must be >= 2");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TwoComponentTokens t;
  t.h1 = RowVector(d);
  t.h2 = RowVector(d);
  for (Index i = 0; i < d; ++i) {
    t.h1(i) = gauss(rng);
    t.h2(i) = gauss(rng);
  }
  t.h1.normalize();
  t.h2 -= t.h2.dot(t.h1) * t.h1;
  t.h2.normalize();
  const double peak = std::floor(unit(rng) * static_cast<double>(L));
  const double width = 1.0 + 2.0 * unit(rng);
  t.w1 = RowVector(L);
  t.w2 = RowVector(L);
  for (Index l = 0; l < L; ++l) {
    const double dl = static_cast<double>(l) - peak;
    t.w1(l) = 0.2 + std::exp(-dl * dl / (2.0 * width * width));
    t.w2(l) = 0.5 + 0.5 * unit(rng);
  }
  t.a1 = ratio;
  t.a2 = 1.0;
  return t;
}

struct DominanceTrial {
  DirectionCosines before;
  DirectionCosines after;  // dominant-peak token at the floor
  Index depleted_token = -1;
};

struct DominanceRatioSummary {
  double ratio = 0.0;
  int trials = 0;
  double mean_dominant = 0.0;
  double min_dominant = 0.0;
  double mean_secondary = 0.0;
  double mean_dominant_after = 0.0;
  int reduced = 0;  // trials where the dominant cosine strictly fell
};

struct DominanceSettings {
  Index tokens = 16;
  Index dim = 64;
  double gamma = 3.0;
  double tau = 0.3;
  double epsilon = 1e-4;
};

inline DominanceTrial dominance_trial(double ratio, std::mt19937_64& rng, const DominanceSettings& s = {}) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  TwoComponentTokens t = random_two_component(s.tokens, s.dim, ratio, rng);
  Matrix wk(s.dim, s.dim);
  for (Index i = 0; i < wk.size(); ++i) wk.data()[i] = gauss(rng) / std::sqrt(static_cast<double>(s.dim));
  RowVector q(s.dim);
  for (Index i = 0; i < s.dim; ++i) q(i) = gauss(rng) / std::sqrt(static_cast<double>(s.dim));
  const Matrix tokens = t.tokens();

  DominanceTrial out;
  RowVector e = RowVector::Ones(s.tokens);
  out.before = direction_cosines(own_logit_gradient(q, wk, tokens, e, s.gamma, s.tau), wk, t);
  (t.a1 * t.w1).maxCoeff(&out.depleted_token);
  e(out.depleted_token) = s.epsilon;
  out.after = direction_cosines(own_logit_gradient(q, wk, tokens, e, s.gamma, s.tau), wk, t);
  return out;
}

inline std::vector<DominanceRatioSummary> gradient_dominance_check(const std::vector<double>& ratios, int trials,
                                                                   std::uint64_t seed,
                                                                   const DominanceSettings& s = {}) {
  std::vector<DominanceRatioSummary> out;
  for (double ratio : ratios) {
    std::mt19937_64 rng(seed);
    DominanceRatioSummary r;
    r.ratio = ratio;
    r.trials = trials;
    r.min_dominant = 1.0;
    for (int i = 0; i < trials; ++i) {
      DominanceTrial tr = dominance_trial(ratio, rng, s);
      r.mean_dominant += tr.before.dominant / trials;
      r.mean_secondary += tr.before.secondary / trials;
      r.mean_dominant_after += tr.after.dominant / trials;
      r.min_dominant = std::min(r.min_dominant, tr.before.dominant);
      r.reduced += tr.after.dominant < tr.before.dominant ? 1 : 0;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace slotdep
