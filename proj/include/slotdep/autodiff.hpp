#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// operation of one forward pass (the graph is rebuilt per pass, so
// data-dependent control flow such as random slot orderings is free).
// Calling backward() on a 1 x 1 node propagates adjoints to every recorded
// node and accumulates them into the bound ParameterStore entries.

#include "slotdep/params.hpp"
#include "slotdep/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <type_traits>
#include <vector>

namespace slotdep {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value) { return push(std::move(value), false, nullptr, nullptr); }

  Var parameter(ParameterStore::Entry& entry) {
    return push(entry.value, grad_enabled_, nullptr, &entry);
  }

  Var parameter(ParameterStore& store, const std::string& name) { return parameter(store.at(name)); }

  /// Records a derived node. `backward` receives the node's adjoint and must
  /// call accumulate() for each parent that needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var& p : parents) needs = needs || nodes_[p.id].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{}, nullptr);
  }

  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var& p : parents) needs = needs || nodes_[p.id].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{}, nullptr);
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Adjoint of a node after backward(); zero if nothing flowed into it.
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <class Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if constexpr (std::is_base_of_v<Eigen::ArrayBase<Expr>, Expr>) {
      if (n.grad.size() == 0) {
        n.grad = g.matrix();
      } else {
        n.grad += g.matrix();
      }
    } else {
      if (n.grad.size() == 0) {
        n.grad = g;
      } else {
        n.grad += g;
      }
    }
  }

  void backward(Var loss) {
    if (!grad_enabled_) throw std::logic_error("backward: tape was created without gradients");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw std::invalid_argument("backward: loss must be a 1 x 1 scalar, got " + to_string(shape_of(lv)));
    }
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.entry != nullptr) {
        n.entry->grad += n.grad;
      } else if (n.backward) {
        // Move the closure out so it may touch other nodes without aliasing.
        BackwardFn fn = std::move(n.backward);
        Matrix g = std::move(n.grad);
        fn(*this, g);
        n.grad = std::move(g);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
    ParameterStore::Entry* entry = nullptr;
  };

  Var push(Matrix value, bool needs, BackwardFn backward, ParameterStore::Entry* entry) {
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw std::length_error("Tape overflow");
    nodes_.push_back(Node{std::move(value), Matrix(), needs, std::move(backward), entry});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

namespace ad {

namespace detail {
inline void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(shape_of(a)) + " vs " +
                                to_string(shape_of(b)));
  }
}
}  // namespace detail

inline Var add(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "add");
  Tape& t = *a.tape;
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "sub");
  Tape& t = *a.tape;
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var mul(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "mul");
  Tape& t = *a.tape;
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.record(a.value() * c, {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

inline Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  Matrix v = a.value().array() + c;
  return t.record(std::move(v), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + to_string(shape_of(a.value())) + " x " +
                                to_string(shape_of(b.value())));
  }
  Tape& t = *a.tape;
  Matrix v = a.value() * b.value();
  return t.record(std::move(v), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().transpose();
  return t.record(std::move(v), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

/// a (R x C) plus a 1 x C row broadcast over rows.
inline Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  Tape& t = *a.tape;
  Matrix v = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(v), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

/// a (R x C) times a 1 x C row broadcast over rows.
inline Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: row must be 1 x cols(a)");
  Tape& t = *a.tape;
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(v), {a, row}, [a, row](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) {
      Matrix ga = g.array().rowwise() * row.value().row(0).array();
      t.accumulate(a, ga);
    }
    if (t.needs_grad(row)) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

/// Scales row r of a (R x C) by col(r, 0), col being R x 1.
inline Var scale_rows(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("scale_rows: col must be rows(a) x 1");
  Tape& t = *a.tape;
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return t.record(std::move(v), {a, col}, [a, col](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) {
      Matrix ga = g.array().colwise() * col.value().col(0).array();
      t.accumulate(a, ga);
    }
    if (t.needs_grad(col)) t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.array() * yc.array() * (1.0 - yc.array()));
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().tanh();
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.array() * (1.0 - yc.array().square()));
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().cwiseMax(0.0);
  return t.record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

inline Var exp(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().exp();
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(yc));
  });
}

inline Var log(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().log();
  return t.record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.array() / a.value().array());
  });
}

inline Var square(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().array().square();
  return t.record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, 2.0 * g.array() * a.value().array());
  });
}

inline Var abs(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().cwiseAbs();
  return t.record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.array() * a.value().array().sign());
  });
}

inline Var reciprocal(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().cwiseInverse();
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    t.accumulate(a, -g.array() * yc.array().square());
  });
}

/// Elementwise clamp; the gradient is zero where the clamp is active.
inline Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Matrix y = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(y), {a}, [a, lo, hi](Tape& t, const Matrix& g) {
    const auto& x = a.value().array();
    t.accumulate(a, ((x >= lo) && (x <= hi)).select(g, 0.0));
  });
}

/// max(a, floor) elementwise.
inline Var floor_at(Var a, double floor) { return clamp(a, floor, std::numeric_limits<double>::infinity()); }

/// x * log(x) with the convention 0 * log 0 = 0.
inline Var xlogx(Var a) {
  Tape& t = *a.tape;
  Matrix y = a.value().unaryExpr([](double x) { return x > 0.0 ? x * std::log(x) : 0.0; });
  return t.record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double x) { return x > 0.0 ? std::log(x) + 1.0 : 0.0; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

/// Row-wise softmax. Rejects non-finite logits.
inline Var softmax_rows(Var a) {
  require_finite(a.value(), "softmax_rows");
  Tape& t = *a.tape;
  Matrix y = softmax_rows_value(a.value());
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    Matrix gy = g.cwiseProduct(yc);
    Eigen::VectorXd dots = gy.rowwise().sum();
    Matrix ga = gy - (yc.array().colwise() * dots.array()).matrix();
    t.accumulate(a, ga);
  });
}

/// Softmax down each column inside consecutive groups of `block` rows. With
/// rows laid out as (sample, slot), this normalizes over slots per token.
inline Var softmax_blocks(Var a, Index block) {
  require_finite(a.value(), "softmax_blocks");
  const Matrix& x = a.value();
  if (block <= 0 || x.rows() % block != 0) throw std::invalid_argument("softmax_blocks: rows not a multiple of block");
  Matrix y(x.rows(), x.cols());
  for (Index b = 0; b < x.rows() / block; ++b) {
    auto xb = x.middleRows(b * block, block);
    auto yb = y.middleRows(b * block, block);
    RowVector m = xb.colwise().maxCoeff();
    yb = (xb.rowwise() - m).array().exp();
    RowVector s = yb.colwise().sum();
    yb.array().rowwise() /= s.array();
  }
  Tape& t = *a.tape;
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, block, yc = std::move(yc)](Tape& t, const Matrix& g) {
    Matrix gy = g.cwiseProduct(yc);
    Matrix ga(gy.rows(), gy.cols());
    for (Index b = 0; b < gy.rows() / block; ++b) {
      RowVector dots = gy.middleRows(b * block, block).colwise().sum();
      ga.middleRows(b * block, block) =
          gy.middleRows(b * block, block) - (yc.middleRows(b * block, block).array().rowwise() * dots.array()).matrix();
    }
    t.accumulate(a, ga);
  });
}

/// Per-sample Q_b K_b^T. Q is (B*S) x d, K is (B*L) x d; result (B*S) x L.
inline Var batched_qk(Var q, Var k, Index batch) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  if (Q.cols() != K.cols() || Q.rows() % batch != 0 || K.rows() % batch != 0) {
    throw std::invalid_argument("batched_qk: incompatible shapes");
  }
  const Index S = Q.rows() / batch;
  const Index L = K.rows() / batch;
  Matrix out(batch * S, L);
  for (Index b = 0; b < batch; ++b) {
    out.middleRows(b * S, S).noalias() = Q.middleRows(b * S, S) * K.middleRows(b * L, L).transpose();
  }
  Tape& t = *q.tape;
  return t.record(std::move(out), {q, k}, [q, k, batch, S, L](Tape& t, const Matrix& g) {
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    if (t.needs_grad(q)) {
      Matrix gq(Q.rows(), Q.cols());
      for (Index b = 0; b < batch; ++b) gq.middleRows(b * S, S).noalias() = g.middleRows(b * S, S) * K.middleRows(b * L, L);
      t.accumulate(q, gq);
    }
    if (t.needs_grad(k)) {
      Matrix gk(K.rows(), K.cols());
      for (Index b = 0; b < batch; ++b) {
        gk.middleRows(b * L, L).noalias() = g.middleRows(b * S, S).transpose() * Q.middleRows(b * S, S);
      }
      t.accumulate(k, gk);
    }
  });
}

/// Per-sample A_b V_b. A is (B*S) x L, V is (B*L) x d; result (B*S) x d.
inline Var batched_av(Var a, Var v, Index batch) {
  const Matrix& A = a.value();
  const Matrix& V = v.value();
  if (A.rows() % batch != 0 || V.rows() % batch != 0 || A.cols() != V.rows() / batch) {
    throw std::invalid_argument("batched_av: incompatible shapes");
  }
  const Index S = A.rows() / batch;
  const Index L = V.rows() / batch;
  Matrix out(batch * S, V.cols());
  for (Index b = 0; b < batch; ++b) {
    out.middleRows(b * S, S).noalias() = A.middleRows(b * S, S) * V.middleRows(b * L, L);
  }
  Tape& t = *a.tape;
  return t.record(std::move(out), {a, v}, [a, v, batch, S, L](Tape& t, const Matrix& g) {
    const Matrix& A = a.value();
    const Matrix& V = v.value();
    if (t.needs_grad(a)) {
      Matrix ga(A.rows(), A.cols());
      for (Index b = 0; b < batch; ++b) {
        ga.middleRows(b * S, S).noalias() = g.middleRows(b * S, S) * V.middleRows(b * L, L).transpose();
      }
      t.accumulate(a, ga);
    }
    if (t.needs_grad(v)) {
      Matrix gv(V.rows(), V.cols());
      for (Index b = 0; b < batch; ++b) {
        gv.middleRows(b * L, L).noalias() = A.middleRows(b * S, S).transpose() * g.middleRows(b * S, S);
      }
      t.accumulate(v, gv);
    }
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return t.record(std::move(v), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

/// R x C -> R x 1.
inline Var sum_rows(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().rowwise().sum();
  const Index c = a.cols();
  return t.record(std::move(v), {a}, [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, g.col(0).replicate(1, c));
  });
}

/// R x C -> 1 x C.
inline Var sum_cols(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().colwise().sum();
  const Index r = a.rows();
  return t.record(std::move(v), {a}, [a, r](Tape& t, const Matrix& g) {
    t.accumulate(a, g.row(0).replicate(r, 1));
  });
}

/// Row-major relabeling of the same values.
inline Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: element count changes");
  Tape& t = *a.tape;
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Index r0 = a.rows(), c0 = a.cols();
  return t.record(std::move(v), {a}, [a, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  Tape& t = *parts.front().tape;
  return t.record(std::move(v), parts, [parts](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const Var& p : parts) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  Tape& t = *parts.front().tape;
  return t.record(std::move(v), parts, [parts](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const Var& p : parts) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

inline Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: range");
  Tape& t = *a.tape;
  Matrix v = a.value().middleCols(start, count);
  const Index r = a.rows(), c = a.cols();
  return t.record(std::move(v), {a}, [a, start, count, r, c](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleCols(start, count) = g;
    t.accumulate(a, ga);
  });
}

/// Gathers rows by index (repeats allowed); the backward pass scatter-adds.
inline Var select_rows(Var a, std::vector<Index> idx) {
  const Matrix& x = a.value();
  Matrix v(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw std::out_of_range("select_rows: index out of range");
    v.row(static_cast<Index>(i)) = x.row(idx[i]);
  }
  Tape& t = *a.tape;
  const Index r = x.rows(), c = x.cols();
  return t.record(std::move(v), {a}, [a, idx = std::move(idx), r, c](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, ga);
  });
}

/// R x C -> R x 1 L2 norms. The gradient of a zero row is taken as zero.
inline Var row_norms(Var a) {
  Matrix n = a.value().rowwise().norm();
  Tape& t = *a.tape;
  Matrix nc = n;
  return t.record(std::move(n), {a}, [a, nc = std::move(nc)](Tape& t, const Matrix& g) {
    Eigen::VectorXd f = (nc.array() > 0.0).select(g.col(0).array() / nc.col(0).array(), 0.0);
    t.accumulate(a, a.value().array().colwise() * f.array());
  });
}

/// Divides every row by its L2 norm. Rows must have positive norm.
inline Var normalize_rows(Var a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw std::domain_error("normalize_rows: zero-norm row");
  Matrix y = x.array().colwise() / norms.array();
  Tape& t = *a.tape;
  Matrix yc = y;
  return t.record(std::move(y), {a}, [a, norms, yc = std::move(yc)](Tape& t, const Matrix& g) {
    Eigen::VectorXd dots = g.cwiseProduct(yc).rowwise().sum();
    Matrix ga = (g - (yc.array().colwise() * dots.array()).matrix()).array().colwise() / norms.array();
    t.accumulate(a, ga);
  });
}

}  // namespace ad
}  // namespace slotdep
