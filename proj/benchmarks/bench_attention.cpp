#include <benchmark/benchmark.h>

#include "minikv/attention.hpp"
#include "minikv/harness.hpp"

using namespace minikv;

static void BM_SelectiveFlashAttn(benchmark::State& state) {
    const auto l = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 64;
    const Matrix x = gen_workload(42, l, d, Distribution::Gaussian);
    for (auto _ : state) {
        AttentionResult r = selective_flash_attn(x, x, x, default_scale(d), true, {64, 64});
        benchmark::DoNotOptimize(r.output.data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectiveFlashAttn)->RangeMultiplier(2)->Range(128, 2048)->Complexity();

static void BM_DecodeAttention(benchmark::State& state) {
    const auto l = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 64;
    const Matrix kv = gen_workload(7, l, d, Distribution::Gaussian);
    const Matrix q1 = gen_workload(9, 1, d, Distribution::Gaussian);
    Vector q(q1.row(0), q1.row(0) + d);
    for (auto _ : state) {
        auto r = decode_attention(q, kv, kv, default_scale(d));
        benchmark::DoNotOptimize(r.first.data());
    }
}
BENCHMARK(BM_DecodeAttention)->RangeMultiplier(4)->Range(256, 4096);

BENCHMARK_MAIN();
