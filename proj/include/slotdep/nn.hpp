#pragma once

// Neural building blocks on top of the tape: linear maps, MLPs and a GRU
// cell. Modules only hold parameter names; values live in a ParameterStore
// so the optimizer and gradient checks see a single flat set of tensors.

#include "slotdep/autodiff.hpp"
#include "slotdep/params.hpp"

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace slotdep {

/// Binds store entries to tape leaves once per forward pass.
class Context {
 public:
  Context(Tape& tape, ParameterStore& store) : tape_(tape), store_(store) {}

  Var param(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Var v = tape_.parameter(store_.at(name));
    cache_.emplace(name, v);
    return v;
  }

  Var constant(Matrix m) { return tape_.constant(std::move(m)); }
  Tape& tape() { return tape_; }
  ParameterStore& store() { return store_; }

 private:
  Tape& tape_;
  ParameterStore& store_;
  std::unordered_map<std::string, Var> cache_;
};

enum class Activation { ReLU, Tanh };

inline Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::ReLU:
      return ad::relu(x);
    case Activation::Tanh:
      return ad::tanh(x);
  }
  return x;
}

struct Linear {
  std::string weight;
  std::string bias;
  Index in = 0;
  Index out = 0;

  static Linear create(ParameterStore& store, const std::string& name, Index in, Index out, std::mt19937_64& rng,
                       bool with_bias = true) {
    Linear l{name + ".w", with_bias ? name + ".b" : std::string(), in, out};
    store.add(l.weight, glorot_uniform(in, out, rng));
    if (with_bias) store.add(l.bias, Matrix::Zero(1, out));
    return l;
  }

  Var operator()(Context& ctx, Var x) const {
    Var y = ad::matmul(x, ctx.param(weight));
    if (!bias.empty()) y = ad::add_row(y, ctx.param(bias));
    return y;
  }
};

/// Fully connected stack; activation between layers, none after the last.
struct MLP {
  std::vector<Linear> layers;
  Activation act = Activation::ReLU;

  static MLP create(ParameterStore& store, const std::string& name, const std::vector<Index>& widths,
                    std::mt19937_64& rng, Activation act = Activation::ReLU) {
    MLP m;
    m.act = act;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      m.layers.push_back(Linear::create(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
    }
    return m;
  }

  Var operator()(Context& ctx, Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](ctx, x);
      if (i + 1 < layers.size()) x = activate(x, act);
    }
    return x;
  }
};

/// GRU cell with the convention h' = (1 - z) * h + z * h~, where
///   z  = sigmoid(x Wz + h Uz + bz)
///   r  = sigmoid(x Wr + h Ur + br)
///   h~ = tanh(x Wh + (r * h) Uh + bh).
/// Input weights for the three gates are stored side by side as one
/// in x 3*hidden matrix (column blocks z, r, h); likewise Uz|Ur and Uh.
struct GRUCell {
  std::string w_input;   // in x 3h
  std::string b_input;   // 1 x 3h
  std::string u_gates;   // h x 2h  (z | r)
  std::string u_cand;    // h x h
  Index in = 0;
  Index hidden = 0;

  static GRUCell create(ParameterStore& store, const std::string& name, Index in, Index hidden,
                        std::mt19937_64& rng) {
    GRUCell g{name + ".wx", name + ".bx", name + ".uzr", name + ".uh", in, hidden};
    Matrix wx(in, 3 * hidden);
    for (int k = 0; k < 3; ++k) wx.middleCols(k * hidden, hidden) = glorot_uniform(in, hidden, rng);
    store.add(g.w_input, std::move(wx));
    store.add(g.b_input, Matrix::Zero(1, 3 * hidden));
    Matrix uzr(hidden, 2 * hidden);
    for (int k = 0; k < 2; ++k) uzr.middleCols(k * hidden, hidden) = glorot_uniform(hidden, hidden, rng);
    store.add(g.u_gates, std::move(uzr));
    store.add(g.u_cand, glorot_uniform(hidden, hidden, rng));
    return g;
  }

  Var operator()(Context& ctx, Var x, Var h) const {
    if (x.cols() != in || h.cols() != hidden || x.rows() != h.rows()) {
      throw std::invalid_argument("GRUCell: input " + to_string(shape_of(x.value())) + " / hidden " +
                                  to_string(shape_of(h.value())) + " do not match cell dims");
    }
    Var xg = ad::add_row(ad::matmul(x, ctx.param(w_input)), ctx.param(b_input));
    Var hg = ad::matmul(h, ctx.param(u_gates));
    Var z = ad::sigmoid(ad::add(ad::slice_cols(xg, 0, hidden), ad::slice_cols(hg, 0, hidden)));
    Var r = ad::sigmoid(ad::add(ad::slice_cols(xg, hidden, hidden), ad::slice_cols(hg, hidden, hidden)));
    Var cand = ad::tanh(ad::add(ad::slice_cols(xg, 2 * hidden, hidden), ad::matmul(ad::mul(r, h), ctx.param(u_cand))));
    // (1 - z) * h + z * cand == h + z * (cand - h)
    return ad::add(h, ad::mul(z, ad::sub(cand, h)));
  }
};

}  // namespace slotdep
