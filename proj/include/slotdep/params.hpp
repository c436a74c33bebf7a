#pragma once

#include "slotdep/tensor.hpp"

#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace slotdep {

/// Named trainable tensors with their gradient accumulators. Iteration order
/// is insertion order, which keeps optimizer updates and serialization
/// deterministic.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  Entry& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    require_finite(init, "ParameterStore::add");
    index_.emplace(name, entries_.size());
    Matrix zero = Matrix::Zero(init.rows(), init.cols());
    entries_.push_back(Entry{name, std::move(init), std::move(zero)});
    return entries_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second];
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::deque<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Initializers draw from the caller's engine so model construction is a pure
// function of the seed.
inline Matrix glorot_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Matrix gaussian_matrix(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * dist(rng);
  return m;
}

}  // namespace slotdep
