#include <benchmark/benchmark.h>

#include "minikv/harness.hpp"
#include "minikv/quantizer.hpp"

using namespace minikv;

static void BM_QuantizeMatrix(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const Matrix m = gen_workload(3, rows, 128, Distribution::Gaussian);
    for (auto _ : state) {
        QuantizedTensor t = quantize_matrix(m, GroupAxis::PerToken, kDefaultGroupSize);
        benchmark::DoNotOptimize(t.packed_words.data());
    }
}
BENCHMARK(BM_QuantizeMatrix)->RangeMultiplier(4)->Range(64, 4096);

static void BM_DequantizeMatrix(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const Matrix m = gen_workload(5, rows, 128, Distribution::Gaussian);
    const QuantizedTensor t = quantize_matrix(m, GroupAxis::PerChannel, kDefaultGroupSize);
    for (auto _ : state) {
        Matrix out = dequantize_matrix(t);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_DequantizeMatrix)->RangeMultiplier(4)->Range(64, 4096);

BENCHMARK_MAIN();
