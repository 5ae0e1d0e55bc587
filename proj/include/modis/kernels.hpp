#pragma once

#include "modis/matrix.hpp"

// Dense numeric kernels in two flavours: `serial` is the reference
// implementation, `omp` is the OpenMP data-parallel one. Both accumulate every
// output element in the same order, so their results are bit-identical for
// any thread count. The unqualified functions dispatch between them.
namespace modis::kernels {

enum class Transpose { no, yes };

namespace serial {
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
Matrix col_sums(const Matrix& a);
/// Squared Euclidean distances between all row pairs (n×n).
Matrix pairwise_sq_dists(const Matrix& a);
}  // namespace serial

namespace omp {
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
Matrix col_sums(const Matrix& a);
Matrix pairwise_sq_dists(const Matrix& a);
}  // namespace omp

Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb);
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  return gemm(a, Transpose::no, b, Transpose::no);
}
Matrix col_sums(const Matrix& a);
Matrix pairwise_sq_dists(const Matrix& a);

/// Globally enable/disable the OpenMP path (enabled by default).
void set_parallel(bool enabled) noexcept;
bool parallel_enabled() noexcept;
int max_threads() noexcept;

}  // namespace modis::kernels
