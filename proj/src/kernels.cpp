#include "modis/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdint>

#include "modis/error.hpp"

namespace modis::kernels {
namespace {

std::atomic<bool> g_parallel{true};

// Work below this many multiply-adds is not worth a parallel region.
constexpr std::size_t kParallelGrain = 1 << 15;

struct GemmShape {
  std::size_t n, k, m;
};

GemmShape check_gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const std::size_t n = ta == Transpose::no ? a.rows() : a.cols();
  const std::size_t ka = ta == Transpose::no ? a.cols() : a.rows();
  const std::size_t kb = tb == Transpose::no ? b.rows() : b.cols();
  const std::size_t m = tb == Transpose::no ? b.cols() : b.rows();
  if (ka != kb) {
    throw ShapeError("gemm: inner dimensions differ (" + shape_string(a) + " vs " + shape_string(b) + ")");
  }
  return {n, ka, m};
}

// C(i,:) = sum_k A(i,k) B(k,:) with k ascending.
inline void row_nn(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t m) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double aik = a_row[kk];
    const double* b_row = b + kk * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += aik * b_row[j];
  }
}

// C(i,:) = sum_k A(k,i) B(k,:) with k ascending; A is k×n.
inline void row_tn(const double* a, std::size_t i, std::size_t n, const double* b, double* c_row,
                   std::size_t k, std::size_t m) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double aki = a[kk * n + i];
    const double* b_row = b + kk * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += aki * b_row[j];
  }
}

inline void dist_row(const Matrix& a, std::size_t i, double* out) {
  const std::size_t n = a.rows(), p = a.cols();
  const double* xi = a.data() + i * p;
  for (std::size_t j = 0; j < n; ++j) {
    const double* xj = a.data() + j * p;
    double s = 0.0;
    for (std::size_t f = 0; f < p; ++f) {
      const double d = xi[f] - xj[f];
      s += d * d;
    }
    out[j] = s;
  }
}

template <bool Parallel>
Matrix gemm_impl(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const auto [n, k, m] = check_gemm(a, ta, b, tb);
  // Transposed right operands are materialized so the inner loop stays contiguous.
  const Matrix bt = tb == Transpose::yes ? b.transposed() : Matrix{};
  const Matrix& bb = tb == Transpose::yes ? bt : b;
  Matrix c(n, m);
  const auto ni = static_cast<std::int64_t>(n);
  if (ta == Transpose::no) {
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t i = 0; i < ni; ++i) {
      row_nn(a.data() + i * k, bb.data(), c.data() + i * m, k, m);
    }
  } else {
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t i = 0; i < ni; ++i) {
      row_tn(a.data(), static_cast<std::size_t>(i), n, bb.data(), c.data() + i * m, k, m);
    }
  }
  return c;
}

template <bool Parallel>
Matrix col_sums_impl(const Matrix& a) {
  const std::size_t n = a.rows(), p = a.cols();
  Matrix out(1, p);
  // Column blocks per thread, rows swept in order: each column still sums
  // i = 0..n-1, so both paths agree bitwise.
  constexpr std::size_t kBlock = 64;
  const auto blocks = static_cast<std::int64_t>((p + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kBlock, j1 = std::min(p, j0 + kBlock);
    double* acc = out.data() + j0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = a.data() + i * p;
      for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += row[j];
    }
  }
  return out;
}

template <bool Parallel>
Matrix pairwise_impl(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix out(n, n);
  const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::int64_t i = 0; i < ni; ++i) dist_row(a, static_cast<std::size_t>(i), out.data() + i * n);
  return out;
}

bool use_parallel(std::size_t work) {
  return g_parallel.load(std::memory_order_relaxed) && work >= kParallelGrain && omp_get_max_threads() > 1;
}

}  // namespace

namespace serial {
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  return gemm_impl<false>(a, ta, b, tb);
}
Matrix col_sums(const Matrix& a) { return col_sums_impl<false>(a); }
Matrix pairwise_sq_dists(const Matrix& a) { return pairwise_impl<false>(a); }
}  // namespace serial

namespace omp {
Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  return gemm_impl<true>(a, ta, b, tb);
}
Matrix col_sums(const Matrix& a) { return col_sums_impl<true>(a); }
Matrix pairwise_sq_dists(const Matrix& a) { return pairwise_impl<true>(a); }
}  // namespace omp

Matrix gemm(const Matrix& a, Transpose ta, const Matrix& b, Transpose tb) {
  const auto [n, k, m] = check_gemm(a, ta, b, tb);
  return use_parallel(n * k * m) ? omp::gemm(a, ta, b, tb) : serial::gemm(a, ta, b, tb);
}

Matrix col_sums(const Matrix& a) {
  return use_parallel(a.size()) ? omp::col_sums(a) : serial::col_sums(a);
}

Matrix pairwise_sq_dists(const Matrix& a) {
  return use_parallel(a.rows() * a.rows() * a.cols()) ? omp::pairwise_sq_dists(a)
                                                      : serial::pairwise_sq_dists(a);
}

void set_parallel(bool enabled) noexcept { g_parallel.store(enabled, std::memory_order_relaxed); }
bool parallel_enabled() noexcept { return g_parallel.load(std::memory_order_relaxed); }
int max_threads() noexcept { return omp_get_max_threads(); }

}  // namespace modis::kernels
