// Parallel kernels against their serial reference versions.
#include <benchmark/benchmark.h>

#include <vector>

#include "mrinet/kernels.hpp"
#include "mrinet/rng.hpp"

namespace k = mrinet::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  mrinet::SeededRng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// conv2 of the mini network: 12 -> 32 channels, 7x7 input, 5x5 kernel, pad 2.
k::ConvGeom conv2_geom() { return {12, 7, 7, 5, 5, 1, 1, 2, 2, 7, 7}; }
// conv1 of the mini network: 64x64 grayscale, 11x11 kernel, stride 4, pad 2.
k::ConvGeom conv1_geom() { return {1, 64, 64, 11, 11, 4, 4, 2, 2, 15, 15}; }

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    } else {
      k::reference::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const k::ConvGeom g = state.range(0) == 1 ? conv1_geom() : conv2_geom();
  const std::size_t batch = 32, out = state.range(0) == 1 ? 12 : 32;
  const auto x = random_buffer(batch * g.channels * g.height * g.width, 3);
  const auto w = random_buffer(out * g.patch(), 4);
  const auto b = random_buffer(out, 5);
  std::vector<double> y(batch * out * g.positions());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_forward(batch, out, g, x.data(), w.data(), b.data(), y.data());
    } else {
      k::reference::conv2d_forward(batch, out, g, x.data(), w.data(), b.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const k::ConvGeom g = state.range(0) == 1 ? conv1_geom() : conv2_geom();
  const std::size_t batch = 32, out = state.range(0) == 1 ? 12 : 32;
  const auto x = random_buffer(batch * g.channels * g.height * g.width, 3);
  const auto w = random_buffer(out * g.patch(), 4);
  const auto dy = random_buffer(batch * out * g.positions(), 6);
  std::vector<double> dx(x.size()), dw(w.size()), db(out);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_backward(batch, out, g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                         db.data());
    } else {
      k::reference::conv2d_backward(batch, out, g, x.data(), w.data(), dy.data(), dx.data(),
                                    dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Arg(1)->Arg(2);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(1)->Arg(2);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Arg(1)->Arg(2);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(1)->Arg(2);

BENCHMARK_MAIN();
