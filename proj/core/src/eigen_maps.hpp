#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace jras {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline Eigen::Map<RowMatrix> MatMap(double* p, std::int64_t rows, std::int64_t cols) {
  return Eigen::Map<RowMatrix>(p, rows, cols);
}
inline Eigen::Map<const RowMatrix> ConstMatMap(const double* p, std::int64_t rows,
                                               std::int64_t cols) {
  return Eigen::Map<const RowMatrix>(p, rows, cols);
}
inline Eigen::Map<RowVector> RowVecMap(double* p, std::int64_t n) {
  return Eigen::Map<RowVector>(p, n);
}
inline Eigen::Map<const RowVector> ConstRowVecMap(const double* p, std::int64_t n) {
  return Eigen::Map<const RowVector>(p, n);
}

}  // namespace jras
