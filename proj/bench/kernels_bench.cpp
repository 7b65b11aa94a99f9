// Serial reference vs OpenMP kernels on random population-sized inputs.
#include "ncl/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ncl;

namespace {

constexpr int kDims = 16;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Vector uniform_weights(Eigen::Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

template <bool Parallel>
void bm_cooccurrence(benchmark::State& state) {
  const auto n = state.range(0);
  Matrix cond = random_matrix(kDims, n, 1);
  for (Eigen::Index r = 0; r < cond.rows(); ++r) cond.row(r) /= cond.row(r).sum();
  const Vector prior = uniform_weights(kDims);
  for (auto _ : state) {
    Matrix a = Parallel ? kernels::parallel::cooccurrence(prior, cond) : kernels::reference::cooccurrence(prior, cond);
    benchmark::DoNotOptimize(a.data());
  }
  state.SetComplexityN(n);
}

template <bool Parallel>
void bm_bilinear(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix f = random_matrix(n, kDims, 2);
  const Matrix joint = random_matrix(n, n, 3) / static_cast<double>(n * n);
  const Vector p = uniform_weights(n);
  for (auto _ : state) {
    auto t = Parallel ? kernels::parallel::bilinear_spectral(f, f, joint, p, p, true)
                      : kernels::reference::bilinear_spectral(f, f, joint, p, p, true);
    benchmark::DoNotOptimize(t.alignment);
  }
  state.SetComplexityN(n);
}

template <bool Parallel>
void bm_residual(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix f = random_matrix(n, kDims, 4);
  const Matrix target = random_matrix(n, n, 5);
  for (auto _ : state) {
    auto t = Parallel ? kernels::parallel::factor_residual(target, f, f, true)
                      : kernels::reference::factor_residual(target, f, f, true);
    benchmark::DoNotOptimize(t.residual);
  }
  state.SetComplexityN(n);
}

}  // namespace

BENCHMARK_TEMPLATE(bm_cooccurrence, false)->Name("cooccurrence/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK_TEMPLATE(bm_cooccurrence, true)->Name("cooccurrence/openmp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK_TEMPLATE(bm_bilinear, false)->Name("bilinear_spectral/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK_TEMPLATE(bm_bilinear, true)->Name("bilinear_spectral/openmp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK_TEMPLATE(bm_residual, false)->Name("factor_residual/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK_TEMPLATE(bm_residual, true)->Name("factor_residual/openmp")->RangeMultiplier(4)->Range(64, 1024);

BENCHMARK_MAIN();
