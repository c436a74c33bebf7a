#pragma once

// Per-slot prediction heads and every loss term used by the ablations.
//
// The density head is a diagonal Gaussian over the P normalized source
// parameters. Its NLL doubles as the Hungarian cost between sources and
// slots; matched slots are trained on it, unmatched slots optionally toward
// squashed standard-normal pseudo-targets.

#include "slotdep/autodiff.hpp"
#include "slotdep/hungarian.hpp"
#include "slotdep/nn.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace slotdep {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)
inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 3.0;

struct LossWeights {
  double flow = 1.0;  // matched density NLL
  double exist = 1.0;
  double div = 0.0;
  double ortho = 0.0;
  double ent = 0.0;
  double prior = 0.0;

  void validate() const {
    for (double w : {flow, exist, div, ortho, ent, prior}) {
      if (!(w >= 0.0)) throw std::invalid_argument("LossWeights: weights must be nonnegative");
    }
  }
};

/// Slot context -> (mu, log sigma) over P parameters.
struct GaussianHead {
  MLP net;
  Index params = 0;

  static GaussianHead create(ParameterStore& store, const std::string& name, Index in, Index hidden, Index params,
                             std::mt19937_64& rng) {
    return GaussianHead{MLP::create(store, name, {in, hidden, 2 * params}, rng), params};
  }

  struct Output {
    Var mu;
    Var log_sigma;  // clamped to [-7, 3]
  };

  Output operator()(Context& ctx, Var context) const {
    Var out = net(ctx, context);
    return {ad::slice_cols(out, 0, params),
            ad::clamp(ad::slice_cols(out, params, params), kLogSigmaMin, kLogSigmaMax)};
  }
};

/// Slot context -> existence logit; a slot is active iff logit > 0.
struct ExistenceHead {
  MLP net;

  static ExistenceHead create(ParameterStore& store, const std::string& name, Index in, Index hidden,
                              std::mt19937_64& rng) {
    return ExistenceHead{MLP::create(store, name, {in, hidden, 1}, rng)};
  }

  Var operator()(Context& ctx, Var context) const { return net(ctx, context); }
};

inline bool is_active(double existence_logit) { return existence_logit > 0.0; }

/// sum_p [0.5 ln 2pi + ln sigma_p + (theta_p - mu_p)^2 / (2 sigma_p^2)].
inline double gaussian_nll(const RowVector& mu, const RowVector& log_sigma, const RowVector& theta) {
  double nll = 0.0;
  for (Index p = 0; p < mu.size(); ++p) {
    const double ls = std::min(kLogSigmaMax, std::max(kLogSigmaMin, log_sigma(p)));
    const double z = (theta(p) - mu(p)) * std::exp(-ls);
    nll += kHalfLog2Pi + ls + 0.5 * z * z;
  }
  return nll;
}

/// Row-wise NLL on the tape: mu, log_sigma, theta are R x P; result R x 1.
inline Var gaussian_nll(Var mu, Var log_sigma, Var theta) {
  Var z2 = ad::mul(ad::square(ad::sub(theta, mu)), ad::exp(ad::scale(log_sigma, -2.0)));
  Var per = ad::add(log_sigma, ad::scale(z2, 0.5));
  return ad::add_scalar(ad::sum_rows(per), kHalfLog2Pi * static_cast<double>(mu.cols()));
}

/// C_ks = NLL(theta_k | slot s) for one sample. mu/log_sigma are S x P,
/// theta is K x P.
inline Matrix nll_cost_matrix(const Matrix& mu, const Matrix& log_sigma, const Matrix& theta) {
  Matrix c(theta.rows(), mu.rows());
  for (Index k = 0; k < theta.rows(); ++k) {
    for (Index s = 0; s < mu.rows(); ++s) c(k, s) = gaussian_nll(mu.row(s), log_sigma.row(s), theta.row(k));
  }
  return c;
}

struct MatchedLossResult {
  Var loss;                                 // mean over samples of the mean matched NLL
  std::vector<MatchResult> matches;         // per sample
  std::vector<std::vector<char>> matched;   // per sample, per slot
};

/// Hungarian-matched NLL for a batch. Rows of mu/log_sigma are b*S + s;
/// targets[b] is K_b x P.
inline MatchedLossResult matched_loss(Var mu, Var log_sigma, const std::vector<Matrix>& targets, Index slots) {
  const Index batch = static_cast<Index>(targets.size());
  if (mu.rows() != batch * slots) throw std::invalid_argument("matched_loss: head rows != batch * slots");
  MatchedLossResult res;
  std::vector<Index> rows;
  std::vector<double> weights;
  Matrix theta_rows;
  Index total = 0;
  for (const auto& t : targets) {
    if (t.rows() < 1) throw std::invalid_argument("matched_loss: every sample needs K >= 1");
    total += t.rows();
  }
  theta_rows.resize(total, mu.cols());
  Index r = 0;
  for (Index b = 0; b < batch; ++b) {
    const Matrix& th = targets[static_cast<std::size_t>(b)];
    Matrix cost = nll_cost_matrix(mu.value().middleRows(b * slots, slots),
                                  log_sigma.value().middleRows(b * slots, slots), th);
    MatchResult m = hungarian(cost);
    std::vector<char> flags(static_cast<std::size_t>(slots), 0);
    for (Index k = 0; k < th.rows(); ++k) {
      const int s = m.assignment[static_cast<std::size_t>(k)];
      flags[static_cast<std::size_t>(s)] = 1;
      rows.push_back(b * slots + s);
      weights.push_back(1.0 / (static_cast<double>(th.rows()) * static_cast<double>(batch)));
      theta_rows.row(r++) = th.row(k);
    }
    res.matches.push_back(std::move(m));
    res.matched.push_back(std::move(flags));
  }
  Tape& t = *mu.tape;
  Var nll = gaussian_nll(ad::select_rows(mu, rows), ad::select_rows(log_sigma, rows), t.constant(theta_rows));
  Matrix w(static_cast<Index>(weights.size()), 1);
  for (std::size_t i = 0; i < weights.size(); ++i) w(static_cast<Index>(i), 0) = weights[i];
  res.loss = ad::sum(ad::mul(nll, t.constant(std::move(w))));
  return res;
}

inline Var log_sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().unaryExpr([](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); });
  return t.record(std::move(v), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double x) {
      // 1 - sigmoid(x)
      return x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

struct FocalSettings {
  double gamma = 2.0;
  double alpha = 0.5;
  double smoothing = 0.01;
};

/// Elementwise focal loss on logits (R x 1) against labels in {0,1} with
/// smoothed targets y' = smoothing + (1 - 2 smoothing) y:
///   -alpha [ y' (1-p)^g log p + (1-y') p^g log(1-p) ],  p = sigmoid(logit).
/// Returns the mean over rows.
inline Var focal_loss(Var logits, const Matrix& labels, const FocalSettings& fs = {}) {
  require_shape(labels, shape_of(logits.value()), "focal_loss labels");
  Tape& t = *logits.tape;
  Matrix ys = labels.array() * (1.0 - 2.0 * fs.smoothing) + fs.smoothing;
  Var p = ad::sigmoid(logits);
  Var q = ad::add_scalar(ad::neg(p), 1.0);
  auto power = [&](Var x) {
    if (fs.gamma == 2.0) return ad::square(x);
    if (fs.gamma == 0.0) return t.constant(Matrix::Ones(x.rows(), x.cols()));
    return ad::exp(ad::scale(ad::log(ad::floor_at(x, 1e-300)), fs.gamma));
  };
  Var pos = ad::mul(ad::mul(power(q), log_sigmoid(logits)), t.constant(ys));
  Var neg = ad::mul(ad::mul(power(p), log_sigmoid(ad::neg(logits))), t.constant((1.0 - ys.array()).matrix()));
  return ad::scale(ad::mean(ad::add(pos, neg)), -fs.alpha);
}

inline double focal_loss_value(double logit, double label, const FocalSettings& fs = {}) {
  Tape t(false);
  Matrix l(1, 1), y(1, 1);
  l(0, 0) = logit;
  y(0, 0) = label;
  return focal_loss(t.constant(l), y, fs).scalar();
}

namespace detail {

// Mean over pairs i < j of f(cos(x_i, x_j)) for the given rows.
inline Var pairwise_cosine_mean(Var x, const std::vector<Index>& rows, bool squared) {
  Tape& t = *x.tape;
  const Index n = static_cast<Index>(rows.size());
  Var sel = ad::normalize_rows(ad::select_rows(x, rows));
  Var gram = ad::matmul(sel, ad::transpose(sel));
  Var f = squared ? ad::square(gram) : ad::abs(gram);
  Matrix mask = Matrix::Zero(n, n);
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) mask(i, j) = 1.0 / pairs;
  }
  return ad::sum(ad::mul(f, t.constant(std::move(mask))));
}

}  // namespace detail

/// Diversity: mean over active pairs of squared cosine between slot vectors.
/// Zero-norm slots are excluded; fewer than two usable slots gives 0.
inline Var loss_div(Var slots, const std::vector<Index>& active) {
  std::vector<Index> rows;
  for (Index r : active) {
    if (slots.value().row(r).norm() > 0.0) rows.push_back(r);
  }
  if (rows.size() < 2) return slots.tape->constant(Matrix::Zero(1, 1));
  return detail::pairwise_cosine_mean(slots, rows, true);
}

/// Orthogonality: mean over active pairs of |cos| between attention rows.
inline Var loss_ortho(Var attention, const std::vector<Index>& active) {
  if (active.size() < 2) return attention.tape->constant(Matrix::Zero(1, 1));
  return detail::pairwise_cosine_mean(attention, active, false);
}

/// Entropy: mean over active slots of H(alpha_s) / ln L. Rows are
/// renormalized to sum to one first (a no-op for token-softmax mechanisms).
inline Var loss_ent(Var attention, const std::vector<Index>& active) {
  Tape& t = *attention.tape;
  if (active.empty()) return t.constant(Matrix::Zero(1, 1));
  const double L = static_cast<double>(attention.cols());
  if (L < 2) return t.constant(Matrix::Zero(1, 1));
  Var rows = ad::select_rows(attention, active);
  Var p = ad::scale_rows(rows, ad::reciprocal(ad::sum_rows(rows)));
  Var h = ad::neg(ad::sum(ad::xlogx(p)));
  return ad::scale(h, 1.0 / (std::log(L) * static_cast<double>(active.size())));
}

/// Unmatched-slot regularizer: NLL of sigmoid(z), z ~ N(0, I_P), under each
/// unmatched slot's density; mean over those slots (0 when there are none).
inline Var loss_prior(Var mu, Var log_sigma, const std::vector<Index>& unmatched, std::mt19937_64& rng) {
  Tape& t = *mu.tape;
  if (unmatched.empty()) return t.constant(Matrix::Zero(1, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix target(static_cast<Index>(unmatched.size()), mu.cols());
  for (Index i = 0; i < target.size(); ++i) target.data()[i] = 1.0 / (1.0 + std::exp(-gauss(rng)));
  Var nll = gaussian_nll(ad::select_rows(mu, unmatched), ad::select_rows(log_sigma, unmatched),
                         t.constant(std::move(target)));
  return ad::mean(nll);
}

}  // namespace slotdep
