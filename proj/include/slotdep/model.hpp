#pragma once

// Tokenizer -> slot attention -> per-slot heads, and the training objective
// assembled from the loss terms in heads.hpp.

#include "slotdep/heads.hpp"
#include "slotdep/signal.hpp"
#include "slotdep/slot_attention.hpp"
#include "slotdep/tokenizer.hpp"

#include <random>
#include <vector>

namespace slotdep {

struct ModelConfig {
  TokenizerConfig tokenizer{};
  SlotConfig slots{};
  Index head_hidden = 64;
  Index theta_dim = 2;
};

struct ModelOutput {
  SlotBatch slots;
  Var mu;          // (B*S) x P
  Var log_sigma;   // (B*S) x P
  Var exist;       // (B*S) x 1
};

struct LossBreakdown {
  Var total;
  double flow = 0.0;
  double exist = 0.0;
  double div = 0.0;
  double ortho = 0.0;
  double ent = 0.0;
  double prior = 0.0;
  std::vector<MatchResult> matches;
};

/// Ground-truth theta of every source, K x P.
inline Matrix theta_matrix(const Mixture& m) {
  Matrix t(m.k(), static_cast<Index>(m.sources.front().theta.size()));
  for (int k = 0; k < m.k(); ++k) {
    const auto& th = m.sources[static_cast<std::size_t>(k)].theta;
    for (std::size_t p = 0; p < th.size(); ++p) t(k, static_cast<Index>(p)) = th[p];
  }
  return t;
}

class SlotModel {
 public:
  static SlotModel create(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
    if (cfg.tokenizer.dim != cfg.slots.dim) throw std::invalid_argument("SlotModel: token dim != slot dim");
    SlotModel m;
    m.cfg_ = cfg;
    m.tok_ = Tokenizer::create(store, "tok", cfg.tokenizer, rng);
    m.sa_ = SlotAttention::create(store, "sa", cfg.slots, rng);
    m.density_ = GaussianHead::create(store, "density", cfg.slots.dim, cfg.head_hidden, cfg.theta_dim, rng);
    m.exist_ = ExistenceHead::create(store, "exist", cfg.slots.dim, cfg.head_hidden, rng);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const SlotAttention& attention() const { return sa_; }
  const Tokenizer& tokenizer() const { return tok_; }

  ModelOutput forward(Context& ctx, const Matrix& signals, std::mt19937_64& rng, Mode mode) const {
    Matrix noise = sa_.draw_noise(signals.rows(), rng);
    return forward_with_noise(ctx, signals, noise, rng, mode);
  }

  ModelOutput forward_with_noise(Context& ctx, const Matrix& signals, const Matrix& noise, std::mt19937_64& rng,
                                 Mode mode) const {
    Var tokens = tok_(ctx, signals);
    ModelOutput out;
    out.slots = sa_.forward_with_noise(ctx, tokens, signals.rows(), noise, rng, mode);
    auto d = density_(ctx, out.slots.slots);
    out.mu = d.mu;
    out.log_sigma = d.log_sigma;
    out.exist = exist_(ctx, out.slots.slots);
    return out;
  }

  /// matched NLL + w_exist focal + optional auxiliaries. `targets[b]` is the
  /// K_b x P theta matrix of sample b.
  LossBreakdown loss(Context& ctx, const ModelOutput& out, const std::vector<Matrix>& targets, const LossWeights& w,
                     std::mt19937_64& rng, const FocalSettings& fs = {}) const {
    const Index S = cfg_.slots.slots;
    const Index B = static_cast<Index>(targets.size());
    LossBreakdown lb;
    MatchedLossResult ml = matched_loss(out.mu, out.log_sigma, targets, S);
    lb.matches = std::move(ml.matches);
    lb.flow = ml.loss.scalar();
    Var total = ad::scale(ml.loss, w.flow);

    Matrix labels(B * S, 1);
    std::vector<Index> unmatched;
    for (Index b = 0; b < B; ++b) {
      for (Index s = 0; s < S; ++s) {
        const bool m = ml.matched[static_cast<std::size_t>(b)][static_cast<std::size_t>(s)] != 0;
        labels(b * S + s, 0) = m ? 1.0 : 0.0;
        if (!m) unmatched.push_back(b * S + s);
      }
    }
    if (w.exist > 0.0) {
      Var fl = focal_loss(out.exist, labels, fs);
      lb.exist = fl.scalar();
      total = ad::add(total, ad::scale(fl, w.exist));
    }

    if (w.div > 0.0 || w.ortho > 0.0 || w.ent > 0.0) {
      const Matrix logits = out.exist.value();  // copy: the auxiliary terms grow the tape
      std::vector<Index> all_active;
      std::vector<Var> div_terms, ortho_terms;
      for (Index b = 0; b < B; ++b) {
        std::vector<Index> active;
        for (Index s = 0; s < S; ++s) {
          if (is_active(logits(b * S + s, 0))) active.push_back(b * S + s);
        }
        all_active.insert(all_active.end(), active.begin(), active.end());
        if (active.size() < 2) continue;
        if (w.div > 0.0) div_terms.push_back(loss_div(out.slots.slots, active));
        if (w.ortho > 0.0) ortho_terms.push_back(loss_ortho(out.slots.attention, active));
      }
      auto batch_mean = [&](const std::vector<Var>& terms) {
        Var acc = ctx.constant(Matrix::Zero(1, 1));
        for (const Var& v : terms) acc = ad::add(acc, v);
        return ad::scale(acc, 1.0 / static_cast<double>(B));
      };
      if (w.div > 0.0) {
        Var v = batch_mean(div_terms);
        lb.div = v.scalar();
        total = ad::add(total, ad::scale(v, w.div));
      }
      if (w.ortho > 0.0) {
        Var v = batch_mean(ortho_terms);
        lb.ortho = v.scalar();
        total = ad::add(total, ad::scale(v, w.ortho));
      }
      if (w.ent > 0.0) {
        Var v = loss_ent(out.slots.attention, all_active);
        lb.ent = v.scalar();
        total = ad::add(total, ad::scale(v, w.ent));
      }
    }
    if (w.prior > 0.0) {
      Var v = loss_prior(out.mu, out.log_sigma, unmatched, rng);
      lb.prior = v.scalar();
      total = ad::add(total, ad::scale(v, w.prior));
    }
    lb.total = total;
    return lb;
  }

 private:
  ModelConfig cfg_;
  Tokenizer tok_;
  SlotAttention sa_;
  GaussianHead density_;
  ExistenceHead exist_;
};

}  // namespace slotdep
