// Serial reference against the OpenMP path for the hot kernels. Sizes follow
// the training step: a 64-row batch through the 367-wide encoder, and the
// 3B × 32 clustering kernel.

#include <benchmark/benchmark.h>

#include <random>

#include "modis/kernels.hpp"

namespace k = modis::kernels;
using modis::Matrix;

namespace {

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

template <Matrix (*Gemm)(const Matrix&, k::Transpose, const Matrix&, k::Transpose)>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), p = static_cast<std::size_t>(state.range(1)),
             q = static_cast<std::size_t>(state.range(2));
  const Matrix a = random(n, p, 1), b = random(p, q, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Gemm(a, k::Transpose::no, b, k::Transpose::no));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * p * q));
}

template <Matrix (*Gemm)(const Matrix&, k::Transpose, const Matrix&, k::Transpose)>
void gemm_at(benchmark::State& state) {
  // Weight gradient shape: X^T dY.
  const auto n = static_cast<std::size_t>(state.range(0)), p = static_cast<std::size_t>(state.range(1)),
             q = static_cast<std::size_t>(state.range(2));
  const Matrix a = random(n, p, 3), b = random(n, q, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Gemm(a, k::Transpose::yes, b, k::Transpose::no));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * p * q));
}

template <Matrix (*Dists)(const Matrix&)>
void pairwise(benchmark::State& state) {
  const Matrix a = random(static_cast<std::size_t>(state.range(0)), 32, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Dists(a));
}

template <Matrix (*Sums)(const Matrix&)>
void col_sums(benchmark::State& state) {
  const Matrix a = random(static_cast<std::size_t>(state.range(0)), 367, 6);
  for (auto _ : state) benchmark::DoNotOptimize(Sums(a));
}

void gemm_sizes(benchmark::internal::Benchmark* b) {
  b->Args({64, 367, 256})->Args({64, 256, 64})->Args({256, 256, 256});
}

}  // namespace

BENCHMARK(gemm<k::serial::gemm>)->Name("gemm/serial")->Apply(gemm_sizes);
BENCHMARK(gemm<k::omp::gemm>)->Name("gemm/omp")->Apply(gemm_sizes);
BENCHMARK(gemm_at<k::serial::gemm>)->Name("gemm_at/serial")->Apply(gemm_sizes);
BENCHMARK(gemm_at<k::omp::gemm>)->Name("gemm_at/omp")->Apply(gemm_sizes);
BENCHMARK(pairwise<k::serial::pairwise_sq_dists>)->Name("pairwise/serial")->Arg(192)->Arg(768);
BENCHMARK(pairwise<k::omp::pairwise_sq_dists>)->Name("pairwise/omp")->Arg(192)->Arg(768);
BENCHMARK(col_sums<k::serial::col_sums>)->Name("col_sums/serial")->Arg(64)->Arg(4096);
BENCHMARK(col_sums<k::omp::col_sums>)->Name("col_sums/omp")->Arg(64)->Arg(4096);
BENCHMARK_MAIN();
