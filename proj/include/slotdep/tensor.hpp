#pragma once

// Dense row-major matrices used everywhere in the library. Every value in the
// model (tokens, slots, attention, evidence, activations) is a 2-D matrix;
// vectors are 1 x n or n x 1.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slotdep {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

struct Shape {
  Index rows = 0;
  Index cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

inline std::string to_string(Shape s) {
  std::ostringstream os;
  os << "[" << s.rows << " x " << s.cols << "]";
  return os.str();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) {
    throw std::domain_error(std::string(where) + ": non-finite value in input");
  }
}

inline void require_shape(const Matrix& m, Shape expected, const char* where) {
  if (shape_of(m) != expected) {
    throw std::invalid_argument(std::string(where) + ": expected shape " + to_string(expected) +
                                ", got " + to_string(shape_of(m)));
  }
}

inline Matrix row_vector(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) m(0, i++) = v;
  return m;
}

inline Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw std::invalid_argument("from_rows: ragged input");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace slotdep
