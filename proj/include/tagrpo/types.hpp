#pragma once

#include <Eigen/Dense>

namespace tagrpo {

// Dense double-precision math everywhere. Matrices are row-major so serialized
// buffers and in-memory layout agree byte-for-byte.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline Matrix as_column(const Vector& v) {
  Matrix m(v.size(), 1);
  for (Eigen::Index i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

inline Vector as_vector(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index n = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[n++] = m(r, c);
  return v;
}

}  // namespace tagrpo
