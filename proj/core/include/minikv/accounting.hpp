#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minikv/cache_engine.hpp"
#include "minikv/selection.hpp"

namespace minikv {

struct ModelDims {
    std::size_t layers = 0;   // H
    std::size_t hidden = 0;   // d
    std::size_t n_heads = 0;
};

struct WorkloadDims {
    std::size_t l_prompt = 0;
    std::size_t l_gen = 0;
};

enum class Method { Full, H2O, SnapKV, KIVI, QHitter, MiniKV };

std::string method_name(Method m);

// INT4 per-head compression factor: (d/n_heads * 16) / (d/n_heads * 4 + 2*16).
// The 2*16 metadata term is kept as-is so the published factor reproduces.
double qhitter_factor(const ModelDims& m);

// KV cache size in bytes for one method. H2O/QHitter/MiniKV need a budget;
// SnapKV needs the retained fraction p. Missing parameters raise a config error.
std::uint64_t kv_bytes(Method method, const ModelDims& m, const WorkloadDims& w,
                       std::optional<CacheBudget> budget = std::nullopt,
                       std::optional<double> snapkv_p = std::nullopt);

// Decimal gigabytes (1e9 bytes).
double to_gb(std::uint64_t bytes);

struct MethodReport {
    Method method;
    std::uint64_t bytes = 0;
    double gb = 0.0;
    double reduction_pct = 0.0;  // vs Full
};

struct CompressionReport {
    std::vector<MethodReport> rows;
    // Total cache budgets (alpha_hh + alpha_rw) at which H2O / Q-Hitter match
    // the MiniKV cache size for this workload.
    double h2o_parity_alpha = 0.0;
    double qhitter_parity_alpha = 0.0;
};

CompressionReport compression_report(const ModelDims& m, const WorkloadDims& w,
                                     const CacheBudget& budget, double snapkv_p);

// Exact bytes held by a live cache: packed words at 4 bytes, group params at
// 4 bytes (FP16 scale + FP16 zero equivalent), residual rows at 2 bytes/element.
std::uint64_t measured_bytes(const KVCacheLayer& cache);

}  // namespace minikv
