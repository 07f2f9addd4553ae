#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sgsr/kernels.hpp"

using sgsr::kernels::ConvGeometry;

namespace {

struct Buffers {
  ConvGeometry g;
  std::vector<float> x, w, b, y, gy, gx, gw, gb;

  explicit Buffers(int64_t channels, int64_t size) {
    g.batch = 2;
    g.in_channels = channels;
    g.out_channels = channels;
    g.height = g.width = size;
    g.kernel = 3;
    g.padding = 1;
    std::mt19937 rng(7);
    std::normal_distribution<float> n(0.0f, 0.1f);
    auto fill = [&](std::vector<float>& v, size_t count) {
      v.resize(count);
      for (auto& e : v) e = n(rng);
    };
    const size_t out = g.batch * g.out_channels * g.out_height() * g.out_width();
    fill(x, g.batch * channels * size * size);
    fill(w, g.out_channels * g.patch_size());
    fill(b, g.out_channels);
    fill(gy, out);
    y.resize(out);
    gx.resize(x.size());
    gw.resize(w.size());
    gb.resize(b.size());
  }
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  Buffers s(state.range(0), state.range(1));
  for (auto _ : state) {
    if constexpr (Parallel)
      sgsr::kernels::conv2d_forward(s.g, s.x.data(), s.w.data(), s.b.data(), s.y.data());
    else
      sgsr::kernels::reference::conv2d_forward(s.g, s.x.data(), s.w.data(), s.b.data(), s.y.data());
    benchmark::DoNotOptimize(s.y.data());
  }
  state.SetItemsProcessed(state.iterations() * s.g.batch * s.g.out_channels * s.g.out_height() * s.g.out_width() *
                          s.g.patch_size());
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  Buffers s(state.range(0), state.range(1));
  for (auto _ : state) {
    if constexpr (Parallel)
      sgsr::kernels::conv2d_backward(s.g, s.x.data(), s.w.data(), s.gy.data(), s.gx.data(), s.gw.data(),
                                     s.gb.data());
    else
      sgsr::kernels::reference::conv2d_backward(s.g, s.x.data(), s.w.data(), s.gy.data(), s.gx.data(),
                                                s.gw.data(), s.gb.data());
    benchmark::DoNotOptimize(s.gx.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 32})->Args({32, 32})->Args({32, 64})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Apply(shapes);
BENCHMARK(BM_ConvForward<false>)->Apply(shapes);
BENCHMARK(BM_ConvBackward<true>)->Apply(shapes);
BENCHMARK(BM_ConvBackward<false>)->Apply(shapes);

BENCHMARK_MAIN();
