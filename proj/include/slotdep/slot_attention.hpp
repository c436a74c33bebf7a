#pragma once

// Slot attention variants sharing one GRU + MLP slot-update stack:
//
//   Vanilla            softmax over slots per token, all slots in parallel,
//                      weighted-mean aggregation over tokens.
//   Sequential         slots one at a time, softmax over tokens.
//   EvidenceDepletion  sequential plus a per-token evidence e in [eps, 1]:
//                      keys/values from e*h, logits biased by gamma*log e,
//                      and e depleted after every slot.
//   DataSpace          sequential, but the working tokens themselves are
//                      scaled by (1 - alpha^2) after every slot, whatever the
//                      configured form; optional gamma*log(|h|/max|h|) bias.
//
// All computations are batched: tokens are (B*L) x d with row b*L + l, and
// per-slot outputs are (B*S) x rows with row b*S + s.

#include "slotdep/autodiff.hpp"
#include "slotdep/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotdep {

enum class Mechanism { Vanilla, Sequential, EvidenceDepletion, DataSpace };
enum class DepletionForm { None, Binary, Linear, Quadratic, Cubic };
enum class Ordering { RandomPermutation, Canonical };
// Training draws a fresh slot order per sample (when the config asks for
// RandomPermutation); evaluation always uses the canonical order.
enum class Mode { Train, Eval };

inline std::string_view mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::Vanilla:
      return "vanilla";
    case Mechanism::Sequential:
      return "sequential";
    case Mechanism::EvidenceDepletion:
      return "evidence";
    case Mechanism::DataSpace:
      return "dataspace";
  }
  return "?";
}

inline Mechanism mechanism_from_string(std::string_view s) {
  if (s == "vanilla") return Mechanism::Vanilla;
  if (s == "sequential") return Mechanism::Sequential;
  if (s == "evidence" || s == "evidence_depletion") return Mechanism::EvidenceDepletion;
  if (s == "dataspace" || s == "data_space") return Mechanism::DataSpace;
  throw std::invalid_argument("unknown mechanism '" + std::string(s) + "'");
}

inline std::string_view form_name(DepletionForm f) {
  switch (f) {
    case DepletionForm::None:
      return "none";
    case DepletionForm::Binary:
      return "binary";
    case DepletionForm::Linear:
      return "linear";
    case DepletionForm::Quadratic:
      return "quadratic";
    case DepletionForm::Cubic:
      return "cubic";
  }
  return "?";
}

inline DepletionForm form_from_string(std::string_view s) {
  if (s == "none") return DepletionForm::None;
  if (s == "binary") return DepletionForm::Binary;
  if (s == "linear") return DepletionForm::Linear;
  if (s == "quadratic") return DepletionForm::Quadratic;
  if (s == "cubic") return DepletionForm::Cubic;
  throw std::invalid_argument("unknown depletion form '" + std::string(s) + "'");
}

struct SlotConfig {
  Index slots = 5;
  Index dim = 64;
  Index iterations = 3;
  Index mlp_hidden = 64;
  Mechanism mechanism = Mechanism::EvidenceDepletion;
  bool dataspace_bias = false;
  DepletionForm form = DepletionForm::Linear;
  double gamma = 3.0;
  double tau = 0.3;
  double epsilon = 1e-4;
  Ordering ordering = Ordering::RandomPermutation;

  void validate() const {
    if (slots < 1) throw std::invalid_argument("SlotConfig: slots must be >= 1");
    if (iterations < 1) throw std::invalid_argument("SlotConfig: iterations must be >= 1");
    if (dim < 1 || mlp_hidden < 1) throw std::invalid_argument("SlotConfig: dims must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("SlotConfig: tau must be > 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("SlotConfig: epsilon must lie in (0,1)");
    if (!(gamma >= 0.0)) throw std::invalid_argument("SlotConfig: gamma must be >= 0");
  }
};

/// Output of one batched forward pass. `evidence` holds the final evidence
/// (EvidenceDepletion), the cumulative working-token scale (DataSpace), or
/// ones. The traces hold, per processing step t, the attention of the slot
/// processed at step t (B x L, final inner iteration) and the evidence after
/// its update; they are empty for Vanilla.
struct SlotBatch {
  Var slots;      // (B*S) x d
  Var attention;  // (B*S) x L
  Var evidence;   // B x L
  Index batch = 0;
  Index num_slots = 0;
  Index num_tokens = 0;
  std::vector<std::vector<int>> orders;  // per sample: orders[b][t] = slot processed at step t
  std::vector<Matrix> step_attention;
  std::vector<Matrix> step_evidence;
  std::vector<Matrix> step_evidence_raw;  // before flooring
};

/// Plain-value view of one sample of a SlotBatch.
struct SlotState {
  Matrix slots;      // S x d
  Matrix evidence;   // 1 x L
  Matrix attention;  // S x L
  std::vector<int> order;
};

inline SlotState slot_state(const SlotBatch& out, Index b) {
  SlotState s;
  s.slots = out.slots.value().middleRows(b * out.num_slots, out.num_slots);
  s.attention = out.attention.value().middleRows(b * out.num_slots, out.num_slots);
  s.evidence = out.evidence.value().row(b);
  s.order = out.orders[static_cast<std::size_t>(b)];
  return s;
}

/// e' = max(e * keep(alpha), eps) with keep = 1 - alpha^p (p = 1, 2, 3), or
/// for Binary e' = eps where alpha > 0.5 and e elsewhere. None leaves e as is.
/// `floor` <= 0 disables the floor (data-space depletion).
inline Var deplete(Var e, Var alpha, DepletionForm form, double floor) {
  Tape& t = *e.tape;
  Var out = e;
  switch (form) {
    case DepletionForm::None:
      return e;
    case DepletionForm::Linear:
      out = ad::mul(e, ad::add_scalar(ad::neg(alpha), 1.0));
      break;
    case DepletionForm::Quadratic:
      out = ad::mul(e, ad::add_scalar(ad::neg(ad::square(alpha)), 1.0));
      break;
    case DepletionForm::Cubic:
      out = ad::mul(e, ad::add_scalar(ad::neg(ad::mul(ad::square(alpha), alpha)), 1.0));
      break;
    case DepletionForm::Binary: {
      const Matrix& a = alpha.value();
      Matrix keep = (a.array() > 0.5).select(Matrix::Zero(a.rows(), a.cols()), 1.0);
      Matrix fill = (1.0 - keep.array()) * std::max(floor, 0.0);
      out = ad::add(ad::mul(e, t.constant(std::move(keep))), t.constant(std::move(fill)));
      break;
    }
  }
  return floor > 0.0 ? ad::floor_at(out, floor) : out;
}

/// deplete() on plain values.
inline Matrix deplete_values(const Matrix& e, const Matrix& alpha, DepletionForm form, double floor) {
  Tape t(false);
  return deplete(t.constant(e), t.constant(alpha), form, floor).value();
}

/// gamma * log(n_l / max_l' n_l') per row of `norms` (B x L). Rows whose
/// maximum is 0 get a zero bias. Ratios are floored at 1e-300 so fully
/// depleted tokens keep a finite logit.
inline Var norm_ratio_bias(Var norms, double gamma) {
  const Matrix& n = norms.value();
  constexpr double kTiny = 1e-300;
  Matrix v = Matrix::Zero(n.rows(), n.cols());
  std::vector<Index> argmax(static_cast<std::size_t>(n.rows()), -1);
  for (Index r = 0; r < n.rows(); ++r) {
    Index am = 0;
    const double mx = n.row(r).maxCoeff(&am);
    if (!(mx > 0.0)) continue;
    argmax[static_cast<std::size_t>(r)] = am;
    for (Index c = 0; c < n.cols(); ++c) v(r, c) = gamma * std::log(std::max(n(r, c) / mx, kTiny));
  }
  Tape& t = *norms.tape;
  return t.record(std::move(v), {norms}, [norms, gamma, argmax](Tape& t, const Matrix& g) {
    const Matrix& n = norms.value();
    Matrix gn = Matrix::Zero(n.rows(), n.cols());
    for (Index r = 0; r < n.rows(); ++r) {
      const Index am = argmax[static_cast<std::size_t>(r)];
      if (am < 0) continue;
      const double mx = n(r, am);
      double total = 0.0;
      for (Index c = 0; c < n.cols(); ++c) {
        if (n(r, c) / mx > kTiny) {
          gn(r, c) += gamma * g(r, c) / n(r, c);
          total += g(r, c);
        }
      }
      gn(r, am) -= gamma * total / mx;
    }
    t.accumulate(norms, gn);
  });
}

/// Attention of one slot per sample over tokens, with evidence:
///   logits = q . (e k0) / (tau sqrt d) + gamma log e, softmax over tokens.
/// `keys` are W_k h (no bias), so W_k (e h) = e (W_k h) exactly in real
/// arithmetic; q is B x d, keys (B*L) x d, evidence B x L.
inline Var evidence_attention(Var q, Var keys, Var evidence, double gamma, double tau) {
  const Index batch = q.rows();
  const Index L = evidence.cols();
  const double scale = 1.0 / (tau * std::sqrt(static_cast<double>(q.cols())));
  Var k = ad::scale_rows(keys, ad::reshape(evidence, batch * L, 1));
  Var logits = ad::scale(ad::batched_qk(q, k, batch), scale);
  if (gamma != 0.0) logits = ad::add(logits, ad::scale(ad::log(evidence), gamma));
  return ad::softmax_rows(logits);
}

class SlotAttention {
 public:
  static SlotAttention create(ParameterStore& store, const std::string& prefix, const SlotConfig& cfg,
                              std::mt19937_64& rng) {
    cfg.validate();
    SlotAttention sa;
    sa.cfg_ = cfg;
    sa.mu_ = prefix + ".prior_mu";
    sa.log_sigma_ = prefix + ".prior_log_sigma";
    store.add(sa.mu_, glorot_uniform(1, cfg.dim, rng));
    store.add(sa.log_sigma_, glorot_uniform(1, cfg.dim, rng));
    sa.wq_ = Linear::create(store, prefix + ".wq", cfg.dim, cfg.dim, rng, false);
    sa.wk_ = Linear::create(store, prefix + ".wk", cfg.dim, cfg.dim, rng, false);
    sa.wv_ = Linear::create(store, prefix + ".wv", cfg.dim, cfg.dim, rng, false);
    sa.gru_ = GRUCell::create(store, prefix + ".gru", cfg.dim, cfg.dim, rng);
    sa.mlp_ = MLP::create(store, prefix + ".mlp", {cfg.dim, cfg.mlp_hidden, cfg.dim}, rng);
    return sa;
  }

  const SlotConfig& config() const { return cfg_; }
  SlotConfig& config() { return cfg_; }

  const std::string& prior_mu() const { return mu_; }
  const std::string& prior_log_sigma() const { return log_sigma_; }
  const Linear& query() const { return wq_; }
  const Linear& key() const { return wk_; }
  const Linear& value() const { return wv_; }

  /// s = mu + exp(log sigma) * z for each row of `noise` (rows x d); the
  /// reparameterization keeps mu and log sigma differentiable.
  Var init_slots(Context& ctx, const Matrix& noise) const {
    Var z = ctx.constant(noise);
    Var sigma = ad::exp(ctx.param(log_sigma_));
    return ad::add_row(ad::mul_row(z, sigma), ctx.param(mu_));
  }

  /// One refinement: s <- GRU(u, s) + MLP(s).
  Var update(Context& ctx, Var aggregated, Var slots) const {
    return ad::add(gru_(ctx, aggregated, slots), mlp_(ctx, slots));
  }

  /// Draws the (B*S) x d standard-normal slot noise, row b*S + s.
  Matrix draw_noise(Index batch, std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix z(batch * cfg_.slots, cfg_.dim);
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = gauss(rng);
    return z;
  }

  SlotBatch forward(Context& ctx, Var tokens, Index batch, std::mt19937_64& rng, Mode mode = Mode::Train) const {
    Matrix noise = draw_noise(batch, rng);
    return forward_with_noise(ctx, tokens, batch, noise, rng, mode);
  }

  /// Forward with caller-supplied slot noise; `rng` only drives the slot order.
  SlotBatch forward_with_noise(Context& ctx, Var tokens, Index batch, const Matrix& noise, std::mt19937_64& rng,
                               Mode mode = Mode::Train) const {
    const bool shuffle = mode == Mode::Train && cfg_.ordering == Ordering::RandomPermutation;
    if (batch <= 0 || tokens.rows() % batch != 0) throw std::invalid_argument("SlotAttention: tokens not (B*L) x d");
    if (tokens.cols() != cfg_.dim) throw std::invalid_argument("SlotAttention: token dim != slot dim");
    require_shape(noise, {batch * cfg_.slots, cfg_.dim}, "SlotAttention noise");
    switch (cfg_.mechanism) {
      case Mechanism::Vanilla:
        return vanilla(ctx, tokens, batch, noise);
      case Mechanism::Sequential:
        return sequential(ctx, tokens, batch, noise, rng, shuffle, /*gamma=*/0.0, DepletionForm::None, false);
      case Mechanism::EvidenceDepletion:
        return sequential(ctx, tokens, batch, noise, rng, shuffle, cfg_.gamma, cfg_.form, false);
      case Mechanism::DataSpace:
        return sequential(ctx, tokens, batch, noise, rng, shuffle, cfg_.dataspace_bias ? cfg_.gamma : 0.0,
                          DepletionForm::Quadratic, true);
    }
    throw std::logic_error("unreachable");
  }

 private:
  SlotBatch vanilla(Context& ctx, Var tokens, Index batch, const Matrix& noise) const {
    const Index S = cfg_.slots;
    const Index L = tokens.rows() / batch;
    Var keys = wk_(ctx, tokens);
    Var values = wv_(ctx, tokens);
    Var slots = init_slots(ctx, noise);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
    Var alpha = slots;
    for (Index it = 0; it < cfg_.iterations; ++it) {
      Var q = wq_(ctx, slots);
      alpha = ad::softmax_blocks(ad::scale(ad::batched_qk(q, keys, batch), scale), S);
      Var weights = ad::scale_rows(alpha, ad::reciprocal(ad::sum_rows(alpha)));
      Var agg = ad::batched_av(weights, values, batch);
      slots = update(ctx, agg, slots);
    }
    SlotBatch out;
    out.slots = slots;
    out.attention = alpha;
    out.evidence = ctx.constant(Matrix::Ones(batch, L));
    out.batch = batch;
    out.num_slots = S;
    out.num_tokens = L;
    out.orders.assign(static_cast<std::size_t>(batch), canonical_order());
    return out;
  }

  std::vector<int> canonical_order() const {
    std::vector<int> o(static_cast<std::size_t>(cfg_.slots));
    std::iota(o.begin(), o.end(), 0);
    return o;
  }

  SlotBatch sequential(Context& ctx, Var tokens, Index batch, const Matrix& noise, std::mt19937_64& rng,
                       bool shuffle, double gamma, DepletionForm form, bool data_space) const {
    const Index S = cfg_.slots;
    const Index L = tokens.rows() / batch;
    SlotBatch out;
    out.batch = batch;
    out.num_slots = S;
    out.num_tokens = L;
    out.orders.resize(static_cast<std::size_t>(batch));
    for (auto& o : out.orders) {
      o = canonical_order();
      if (shuffle) std::shuffle(o.begin(), o.end(), rng);
    }

    Var keys = wk_(ctx, tokens);
    Var values = wv_(ctx, tokens);
    // Evidence space: e in [eps, 1]. Data space: cumulative token scale m, so
    // that the working tokens are m * h and ||m h|| = m ||h||.
    Var state = ctx.constant(Matrix::Ones(batch, L));
    Var token_norms;
    if (data_space && gamma != 0.0) token_norms = ad::reshape(ad::row_norms(tokens), batch, L);
    const double scale = 1.0 / (cfg_.tau * std::sqrt(static_cast<double>(cfg_.dim)));

    std::vector<Var> step_slots, step_alpha;
    for (Index t = 0; t < S; ++t) {
      std::vector<Index> rows(static_cast<std::size_t>(batch));
      for (Index b = 0; b < batch; ++b) rows[static_cast<std::size_t>(b)] = b * S + out.orders[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
      Matrix z(batch, cfg_.dim);
      for (Index b = 0; b < batch; ++b) z.row(b) = noise.row(rows[static_cast<std::size_t>(b)]);
      Var s = init_slots(ctx, z);

      Var flat = ad::reshape(state, batch * L, 1);
      Var k = ad::scale_rows(keys, flat);
      Var v = ad::scale_rows(values, flat);
      Var bias;
      bool has_bias = false;
      if (gamma != 0.0) {
        bias = data_space ? norm_ratio_bias(ad::mul(token_norms, state), gamma) : ad::scale(ad::log(state), gamma);
        has_bias = true;
      }
      Var alpha = state;
      for (Index it = 0; it < cfg_.iterations; ++it) {
        Var q = wq_(ctx, s);
        Var logits = ad::scale(ad::batched_qk(q, k, batch), scale);
        if (has_bias) logits = ad::add(logits, bias);
        alpha = ad::softmax_rows(logits);
        Var agg = ad::batched_av(alpha, v, batch);
        s = update(ctx, agg, s);
      }
      step_slots.push_back(s);
      step_alpha.push_back(alpha);
      out.step_attention.push_back(alpha.value());
      if (form != DepletionForm::None) {
        Var raw = deplete(state, alpha, form, 0.0);
        out.step_evidence_raw.push_back(raw.value());
        state = data_space ? raw : ad::floor_at(raw, cfg_.epsilon);
      } else {
        out.step_evidence_raw.push_back(state.value());
      }
      out.step_evidence.push_back(state.value());
    }

    // Step-major rows (t*B + b) -> slot-major rows (b*S + slot).
    std::vector<Index> gather(static_cast<std::size_t>(batch * S));
    for (Index b = 0; b < batch; ++b) {
      for (Index t = 0; t < S; ++t) {
        const Index slot = out.orders[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
        gather[static_cast<std::size_t>(b * S + slot)] = t * batch + b;
      }
    }
    out.slots = ad::select_rows(ad::concat_rows(step_slots), gather);
    out.attention = ad::select_rows(ad::concat_rows(step_alpha), gather);
    out.evidence = state;
    return out;
  }

  SlotConfig cfg_;
  std::string mu_, log_sigma_;
  Linear wq_, wk_, wv_;
  GRUCell gru_;
  MLP mlp_;
};

/// Data-space token update on plain values: h_l <- h_l * (1 - alpha_l^2).
inline Matrix deplete_tokens(const Matrix& tokens, const Matrix& alpha_row) {
  if (alpha_row.rows() != 1 || alpha_row.cols() != tokens.rows()) {
    throw std::invalid_argument("deplete_tokens: alpha must be 1 x L");
  }
  Matrix out = tokens;
  for (Index l = 0; l < tokens.rows(); ++l) out.row(l) *= 1.0 - alpha_row(0, l) * alpha_row(0, l);
  return out;
}

}  // namespace slotdep
