#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace vdict {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Row-wise softmax with max subtraction.
inline void softmax_rows_inplace(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

inline Matrix softmax_rows(Matrix m) {
  softmax_rows_inplace(m);
  return m;
}

/// Gradient of a row-wise softmax: given P = softmax(S) and dL/dP, returns dL/dS.
inline Matrix softmax_rows_backward(const Matrix& probs, const Matrix& d_probs) {
  Matrix d = probs.cwiseProduct(d_probs);
  const Vector row_dot = d.rowwise().sum();
  d -= probs.cwiseProduct(row_dot.replicate(1, probs.cols()));
  return d;
}

inline Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace vdict
