// Serial reference kernels vs the blocked/OpenMP kernels on the shapes a
// tiny-VGG forward pass produces.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "chanprune/kernels.hpp"

namespace k = chanprune::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> dist;
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0f, a.data(), kk, b.data(), n, 0.0f, c.data(), n);
    } else {
      k::serial::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0f, a.data(), kk, b.data(), n, 0.0f, c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * n * kk * state.iterations(), benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

// conv2 of tiny-VGG (16 -> 16, 32x32) with 4 images per chunk; conv of the
// last block (128 -> 128, 2x2) with the whole batch of 128.
void GemmShapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 4096, 144})->Args({128, 512, 1152})->Args({256, 256, 256});
}

BENCHMARK_TEMPLATE(BM_Gemm, false)->Apply(GemmShapes)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Gemm, true)->Apply(GemmShapes)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 32, 32, 3, 1, 1};
  const std::size_t count = 4;
  auto images = random_vec(count * g.channels * 32 * 32, 3);
  std::vector<float> col(g.patch_size() * count * 32 * 32);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::im2col(g, images.data(), count, col.data());
    } else {
      k::serial::im2col(g, images.data(), count, col.data());
    }
    benchmark::DoNotOptimize(col.data());
  }
}

BENCHMARK_TEMPLATE(BM_Im2col, false)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(BM_Im2col, true)->Arg(16)->Unit(benchmark::kMicrosecond);

template <bool Parallel>
void BM_Col2im(benchmark::State& state) {
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 32, 32, 3, 1, 1};
  const std::size_t count = 4;
  auto col = random_vec(g.patch_size() * count * 32 * 32, 4);
  std::vector<float> images(count * g.channels * 32 * 32);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::col2im(g, col.data(), count, images.data());
    } else {
      k::serial::col2im(g, col.data(), count, images.data());
    }
    benchmark::DoNotOptimize(images.data());
  }
}

BENCHMARK_TEMPLATE(BM_Col2im, false)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(BM_Col2im, true)->Arg(16)->Unit(benchmark::kMicrosecond);

template <bool Parallel>
void BM_MaxPool(benchmark::State& state) {
  const std::size_t planes = 128 * 16;
  auto in = random_vec(planes * 32 * 32, 5);
  std::vector<float> out(planes * 16 * 16);
  std::vector<std::uint32_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::maxpool_forward(in.data(), planes, 32, 32, 2, out.data(), arg.data());
    } else {
      k::serial::maxpool_forward(in.data(), planes, 32, 32, 2, out.data(), arg.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK_TEMPLATE(BM_MaxPool, false)->Unit(benchmark::kMicrosecond);
BENCHMARK_TEMPLATE(BM_MaxPool, true)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
