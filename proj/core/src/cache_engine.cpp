#include "minikv/cache_engine.hpp"

#include <stdexcept>

#include "minikv/accounting.hpp"

namespace minikv {

KVCacheLayer make_cache(std::size_t d, std::size_t n_r, std::size_t group_size, QuantMode mode) {
    if (d == 0) {
        throw std::invalid_argument("make_cache: d must be >= 1");
    }
    if (group_size < 1 || n_r == 0 || n_r % group_size != 0) {
        throw std::invalid_argument("make_cache: n_r must be a positive multiple of group_size");
    }
    KVCacheLayer cache;
    cache.d = d;
    cache.n_r = n_r;
    cache.group_size = group_size;
    cache.mode = mode;
    cache.q_key.axis = GroupAxis::PerChannel;
    cache.q_key.group_size = group_size;
    cache.q_key.logical_cols = d;
    cache.q_value.axis = GroupAxis::PerToken;
    cache.q_value.group_size = group_size;
    cache.q_value.logical_cols = d;
    cache.r_key = Matrix(0, d);
    cache.r_value = Matrix(0, d);
    return cache;
}

namespace {

void store_block(KVCacheLayer& cache, const Matrix& k_block, const Matrix& v_block) {
    if (cache.mode == QuantMode::Identity) {
        if (cache.fp_key.rows == 0) {
            cache.fp_key = k_block;
            cache.fp_value = v_block;
        } else {
            cache.fp_key.data.insert(cache.fp_key.data.end(), k_block.data.begin(),
                                     k_block.data.end());
            cache.fp_key.rows += k_block.rows;
            cache.fp_value.data.insert(cache.fp_value.data.end(), v_block.data.begin(),
                                       v_block.data.end());
            cache.fp_value.rows += v_block.rows;
        }
    } else {
        append_block(cache.q_key, k_block);
        append_block(cache.q_value, v_block);
    }
    cache.tokens_quantized += k_block.rows;
}

}  // namespace

std::pair<KVCacheLayer, PrefillReport> prefill(const Matrix& k, const Matrix& v,
                                               const Vector& a_cumul, std::size_t hh_count,
                                               std::size_t rw_count, std::size_t n_r,
                                               std::size_t group_size, QuantMode mode) {
    if (k.rows != v.rows || k.rows != a_cumul.size()) {
        throw std::invalid_argument("prefill: k/v/a_cumul length mismatch");
    }
    if (k.cols != v.cols) {
        throw std::invalid_argument("prefill: k/v width mismatch");
    }
    if (hh_count + rw_count == 0) {
        throw std::runtime_error("prefill: zero kept tokens");
    }
    KVCacheLayer cache = make_cache(k.cols, n_r, group_size, mode);
    PrefillReport report;
    report.kept = select_token_counts(a_cumul, hh_count, rw_count);
    report.a_cumul = a_cumul;
    report.bytes_before = static_cast<std::uint64_t>(2) * k.rows * k.cols * 2;  // K+V, FP16
    store_block(cache, gather_rows(k, report.kept.kept), gather_rows(v, report.kept.kept));
    report.bytes_after = measured_bytes(cache);
    return {std::move(cache), std::move(report)};
}

void decode_append(KVCacheLayer& cache, const Vector& t_k, const Vector& t_v) {
    if (t_k.size() != cache.d || t_v.size() != cache.d) {
        throw std::invalid_argument("decode_append: token dimension mismatch");
    }
    append_row(cache.r_key, t_k);
    append_row(cache.r_value, t_v);
    if (cache.r_key.rows == cache.n_r) {
        store_block(cache, cache.r_key, cache.r_value);
        cache.r_key = Matrix(0, cache.d);
        cache.r_value = Matrix(0, cache.d);
    }
}

Matrix stored_keys(const KVCacheLayer& cache) {
    return cache.mode == QuantMode::Identity ? cache.fp_key : dequantize_matrix(cache.q_key);
}

Matrix stored_values(const KVCacheLayer& cache) {
    return cache.mode == QuantMode::Identity ? cache.fp_value : dequantize_matrix(cache.q_value);
}

Vector decode_step(KVCacheLayer& cache, const Vector& t_q, const Vector& t_k,
                   const Vector& t_v, float scale) {
    if (cache.total_tokens() == 0) {
        throw std::runtime_error("decode_step: empty cache");
    }
    if (t_q.size() != cache.d) {
        throw std::invalid_argument("decode_step: query dimension mismatch");
    }
    decode_append(cache, t_k, t_v);

    const Matrix keys_q = stored_keys(cache);
    const std::size_t n_quant = keys_q.rows;
    const std::size_t n_res = cache.r_key.rows;

    Vector attn(n_quant + n_res);
    for (std::size_t j = 0; j < n_quant; ++j) {
        attn[j] = scale * dot(t_q.data(), keys_q.row(j), cache.d);
    }
    for (std::size_t j = 0; j < n_res; ++j) {
        attn[n_quant + j] = scale * dot(t_q.data(), cache.r_key.row(j), cache.d);
    }
    softmax_inplace(attn.data(), attn.size());

    const Matrix vals_q = stored_values(cache);
    Vector out(cache.d, 0.0f);
    for (std::size_t j = 0; j < n_quant; ++j) {
        const float* vrow = vals_q.row(j);
        for (std::size_t c = 0; c < cache.d; ++c) {
            out[c] += attn[j] * vrow[c];
        }
    }
    for (std::size_t j = 0; j < n_res; ++j) {
        const float* vrow = cache.r_value.row(j);
        for (std::size_t c = 0; c < cache.d; ++c) {
            out[c] += attn[n_quant + j] * vrow[c];
        }
    }
    return out;
}

}  // namespace minikv
