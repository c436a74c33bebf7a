#pragma once

// Turns raw 1-channel signals into L embedded tokens: contiguous chunks of
// N/L samples, a shared linear embedding, plus a learned per-position
// offset. The ChunkFFT variant embeds the magnitude and phase of each chunk's
// DFT instead of the raw samples.

#include "slotdep/nn.hpp"
#include "slotdep/signal.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotdep {

enum class TokenizerKind { Chunk, ChunkFFT };

inline TokenizerKind tokenizer_from_string(std::string_view s) {
  if (s == "chunk") return TokenizerKind::Chunk;
  if (s == "chunk_fft" || s == "chunkfft") return TokenizerKind::ChunkFFT;
  throw std::invalid_argument("unknown tokenizer '" + std::string(s) + "'");
}

inline std::string_view tokenizer_name(TokenizerKind k) { return k == TokenizerKind::Chunk ? "chunk" : "chunk_fft"; }

/// Splits each row of `signals` (B x N) into L chunks: result (B*L) x (N/L),
/// row b*L + l holding chunk l of sample b.
inline Matrix chunk_signals(const Matrix& signals, Index tokens) {
  if (tokens <= 0 || signals.cols() % tokens != 0) {
    throw std::invalid_argument("chunk_signals: N=" + std::to_string(signals.cols()) +
                                " is not divisible by L=" + std::to_string(tokens));
  }
  const Index chunk = signals.cols() / tokens;
  return Eigen::Map<const Matrix>(signals.data(), signals.rows() * tokens, chunk);
}

/// Magnitude and phase of the DFT bins 0..chunk/2 of every row.
inline Matrix chunk_spectrum(const Matrix& chunks) {
  const Index n = chunks.cols();
  const Index bins = n / 2 + 1;
  Matrix out(chunks.rows(), 2 * bins);
  for (Index r = 0; r < chunks.rows(); ++r) {
    for (Index k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (Index t = 0; t < n; ++t) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
        acc += chunks(r, t) * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out(r, k) = std::abs(acc);
      out(r, bins + k) = std::abs(acc) > 1e-12 ? std::arg(acc) : 0.0;
    }
  }
  return out;
}

struct TokenizerConfig {
  Index tokens = 16;
  Index samples = 256;
  Index dim = 64;
  TokenizerKind kind = TokenizerKind::Chunk;
  bool positional = true;

  Index chunk() const { return samples / tokens; }
  Index feature_dim() const { return kind == TokenizerKind::Chunk ? chunk() : 2 * (chunk() / 2 + 1); }
};

class Tokenizer {
 public:
  static Tokenizer create(ParameterStore& store, const std::string& prefix, const TokenizerConfig& cfg,
                          std::mt19937_64& rng) {
    if (cfg.tokens <= 0 || cfg.samples % cfg.tokens != 0) {
      throw std::invalid_argument("Tokenizer: N=" + std::to_string(cfg.samples) + " not divisible by L=" +
                                  std::to_string(cfg.tokens));
    }
    Tokenizer t;
    t.cfg_ = cfg;
    t.embed_ = Linear::create(store, prefix + ".embed", cfg.feature_dim(), cfg.dim, rng);
    if (cfg.positional) {
      t.pos_ = prefix + ".pos";
      store.add(t.pos_, gaussian_matrix(cfg.tokens, cfg.dim, 0.02, rng));
    }
    return t;
  }

  /// Token features for a batch of signals, before embedding.
  Matrix features(const Matrix& signals) const {
    Matrix chunks = chunk_signals(signals, cfg_.tokens);
    return cfg_.kind == TokenizerKind::Chunk ? chunks : chunk_spectrum(chunks);
  }

  /// signals: B x N. Returns (B*L) x d.
  Var operator()(Context& ctx, const Matrix& signals) const {
    if (signals.cols() != cfg_.samples) throw std::invalid_argument("Tokenizer: unexpected signal length");
    Var x = embed_(ctx, ctx.constant(features(signals)));
    if (!pos_.empty()) {
      std::vector<Index> tile(static_cast<std::size_t>(signals.rows() * cfg_.tokens));
      for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = static_cast<Index>(i) % cfg_.tokens;
      x = ad::add(x, ad::select_rows(ctx.param(pos_), std::move(tile)));
    }
    return x;
  }

  const TokenizerConfig& config() const { return cfg_; }
  const Linear& embedding() const { return embed_; }
  const std::string& positional_name() const { return pos_; }

 private:
  TokenizerConfig cfg_;
  Linear embed_;
  std::string pos_;
};

/// Stacks mixture signals into a B x N matrix.
inline Matrix stack_signals(const std::vector<const Mixture*>& batch) {
  if (batch.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(batch.size()), batch.front()->signal.size());
  for (std::size_t i = 0; i < batch.size(); ++i) m.row(static_cast<Index>(i)) = batch[i]->signal.transpose();
  return m;
}

}  // namespace slotdep
