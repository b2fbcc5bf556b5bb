#include "minikv/accounting.hpp"

#include <cmath>
#include <stdexcept>

namespace minikv {

std::string method_name(Method m) {
    switch (m) {
        case Method::Full: return "Full";
        case Method::H2O: return "H2O";
        case Method::SnapKV: return "SnapKV";
        case Method::KIVI: return "KIVI";
        case Method::QHitter: return "Q-Hitter";
        case Method::MiniKV: return "MiniKV";
    }
    return "?";
}

double qhitter_factor(const ModelDims& m) {
    if (m.n_heads == 0 || m.hidden % m.n_heads != 0) {
        throw std::invalid_argument("qhitter_factor: hidden must be divisible by n_heads");
    }
    const double per_head = static_cast<double>(m.hidden) / static_cast<double>(m.n_heads);
    return (per_head * 16.0) / (per_head * 4.0 + 2.0 * 16.0);
}

std::uint64_t kv_bytes(Method method, const ModelDims& m, const WorkloadDims& w,
                       std::optional<CacheBudget> budget, std::optional<double> snapkv_p) {
    const double hd = static_cast<double>(m.layers) * static_cast<double>(m.hidden);
    const double lp = static_cast<double>(w.l_prompt);
    const double lg = static_cast<double>(w.l_gen);
    const auto need_budget = [&]() -> double {
        if (!budget) {
            throw std::runtime_error("kv_bytes: method requires a cache budget");
        }
        return budget->alpha_hh + budget->alpha_rw;
    };
    double bytes = 0.0;
    switch (method) {
        case Method::Full:
            bytes = 2.0 * hd * (lp + lg) * 2.0;
            break;
        case Method::H2O:
            bytes = 2.0 * hd * lp * need_budget() * 2.0;
            break;
        case Method::SnapKV:
            if (!snapkv_p) {
                throw std::runtime_error("kv_bytes: SnapKV requires a retained fraction p");
            }
            bytes = 2.0 * hd * (*snapkv_p * lp + lg) * 2.0;
            break;
        case Method::KIVI:
            bytes = hd * (lp + lg);
            break;
        case Method::QHitter:
            bytes = 2.0 * hd * lp * need_budget() * 2.0 / qhitter_factor(m);
            break;
        case Method::MiniKV:
            bytes = hd * need_budget() * lp + hd * lg;
            break;
    }
    return static_cast<std::uint64_t>(std::llround(bytes));
}

double to_gb(std::uint64_t bytes) { return static_cast<double>(bytes) / 1e9; }

CompressionReport compression_report(const ModelDims& m, const WorkloadDims& w,
                                     const CacheBudget& budget, double snapkv_p) {
    CompressionReport report;
    const std::uint64_t full = kv_bytes(Method::Full, m, w);
    const std::uint64_t minikv = kv_bytes(Method::MiniKV, m, w, budget);
    for (Method method : {Method::Full, Method::H2O, Method::SnapKV, Method::KIVI,
                          Method::QHitter, Method::MiniKV}) {
        MethodReport row;
        row.method = method;
        row.bytes = kv_bytes(method, m, w, budget, snapkv_p);
        row.gb = to_gb(row.bytes);
        row.reduction_pct =
            100.0 * (1.0 - static_cast<double>(row.bytes) / static_cast<double>(full));
        report.rows.push_back(row);
    }
    // Budget at which each baseline's cache equals MiniKV's: invert the linear
    // dependence of the H2O / Q-Hitter formulas on (alpha_hh + alpha_rw).
    const double hd = static_cast<double>(m.layers) * static_cast<double>(m.hidden);
    const double denom = 4.0 * hd * static_cast<double>(w.l_prompt);
    report.h2o_parity_alpha = static_cast<double>(minikv) / denom;
    report.qhitter_parity_alpha = static_cast<double>(minikv) * qhitter_factor(m) / denom;
    return report;
}

namespace {

std::uint64_t tensor_bytes(const QuantizedTensor& t) {
    return static_cast<std::uint64_t>(t.packed_words.size()) * 4 +
           static_cast<std::uint64_t>(t.params.size()) * 4;
}

}  // namespace

std::uint64_t measured_bytes(const KVCacheLayer& cache) {
    std::uint64_t bytes = 0;
    if (cache.mode == QuantMode::Identity) {
        bytes += static_cast<std::uint64_t>(cache.fp_key.data.size()) * 2;
        bytes += static_cast<std::uint64_t>(cache.fp_value.data.size()) * 2;
    } else {
        bytes += tensor_bytes(cache.q_key);
        bytes += tensor_bytes(cache.q_value);
    }
    bytes += static_cast<std::uint64_t>(cache.r_key.data.size()) * 2;
    bytes += static_cast<std::uint64_t>(cache.r_value.data.size()) * 2;
    return bytes;
}

}  // namespace minikv
