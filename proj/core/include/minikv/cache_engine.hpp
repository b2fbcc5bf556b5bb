#pragma once

#include <cstdint>
#include <utility>

#include "minikv/attention.hpp"
#include "minikv/matrix.hpp"
#include "minikv/quantizer.hpp"
#include "minikv/selection.hpp"

namespace minikv {

// Identity keeps full-precision copies instead of 2-bit codes; it exists so the
// pipeline can be run with compression disabled end to end.
enum class QuantMode { TwoBit, Identity };

// Per-layer cache: quantized key/value stores plus full-precision residual
// buffers flushed every n_r tokens.
struct KVCacheLayer {
    std::size_t d = 0;
    std::size_t n_r = 128;
    std::size_t group_size = kDefaultGroupSize;
    QuantMode mode = QuantMode::TwoBit;

    QuantizedTensor q_key;    // PerChannel layout
    QuantizedTensor q_value;  // PerToken layout
    Matrix fp_key;            // identity-mode stores
    Matrix fp_value;
    Matrix r_key;             // residual, < n_r rows after any public operation
    Matrix r_value;
    std::size_t tokens_quantized = 0;

    std::size_t tokens_residual() const { return r_key.rows; }
    std::size_t total_tokens() const { return tokens_quantized + tokens_residual(); }
};

struct PrefillReport {
    SelectionResult kept;
    std::uint64_t bytes_before = 0;  // FP16-equivalent K+V for the full prompt
    std::uint64_t bytes_after = 0;   // measured cache bytes after prefill
    Vector a_cumul;
};

KVCacheLayer make_cache(std::size_t d, std::size_t n_r,
                        std::size_t group_size = kDefaultGroupSize,
                        QuantMode mode = QuantMode::TwoBit);

// Select kept tokens from a_cumul, gather them in ascending token order, and
// quantize (keys PerChannel, values PerToken). Residuals start empty.
std::pair<KVCacheLayer, PrefillReport> prefill(const Matrix& k, const Matrix& v,
                                               const Vector& a_cumul, std::size_t hh_count,
                                               std::size_t rw_count, std::size_t n_r,
                                               std::size_t group_size = kDefaultGroupSize,
                                               QuantMode mode = QuantMode::TwoBit);

// Append one token to the residual buffers; flush a full n_r-token block into
// the quantized stores when the buffer fills.
void decode_append(KVCacheLayer& cache, const Vector& t_k, const Vector& t_v);

// One decode iteration: append t_k/t_v (the new token attends to itself), run a
// single softmax over [dequantized keys || residual keys], and weight the value
// side split into its dequantized and residual parts.
Vector decode_step(KVCacheLayer& cache, const Vector& t_q, const Vector& t_k,
                   const Vector& t_v, float scale);

// Dequantized (or identity-stored) quantized-part keys/values.
Matrix stored_keys(const KVCacheLayer& cache);
Matrix stored_values(const KVCacheLayer& cache);

}  // namespace minikv
