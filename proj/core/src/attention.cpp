#include "minikv/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace minikv {

namespace {

void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v, bool causal) {
    if (q.rows == 0 || k.rows == 0) {
        throw std::invalid_argument("attention: zero-length sequence");
    }
    if (q.cols != k.cols) {
        throw std::invalid_argument("attention: q/k head dimension mismatch");
    }
    if (v.rows != k.rows) {
        throw std::invalid_argument("attention: k/v token count mismatch");
    }
    if (causal && q.rows > k.rows) {
        throw std::invalid_argument("attention: causal requires l_query <= l_key");
    }
}

}  // namespace

AttentionResult selective_flash_attn(const Matrix& q, const Matrix& k, const Matrix& v,
                                     float scale, bool causal, TileConfig tiles) {
    check_shapes(q, k, v, causal);
    if (tiles.block_m < 1 || tiles.block_n < 1) {
        throw std::invalid_argument("attention: tile sizes must be >= 1");
    }
    const std::size_t lq = q.rows;
    const std::size_t lk = k.rows;
    const std::size_t d = q.cols;
    const std::size_t dv = v.cols;
    const std::size_t bm = std::min(tiles.block_m, lq);
    const std::size_t bn = std::min(tiles.block_n, lk);
    // Prefix convention: query i sees keys 0..offset+i.
    const std::size_t offset = causal ? (lk - lq) : 0;

    AttentionResult res;
    res.output = Matrix(lq, dv);
    res.lse.assign(lq, 0.0f);
    res.a_cumul.assign(lk, 0.0f);

    std::vector<float> tile(bm * bn);          // score tile, reused by both passes
    std::vector<float> run_max(lq, -std::numeric_limits<float>::infinity());
    std::vector<float> run_sum(lq, 0.0f);
    res.aux_elements = tile.size() + run_max.size() + run_sum.size();

    // Pass 1: online softmax over key tiles; accumulate weighted V into the output.
    for (std::size_t r0 = 0; r0 < lq; r0 += bm) {
        const std::size_t rend = std::min(r0 + bm, lq);
        for (std::size_t c0 = 0; c0 < lk; c0 += bn) {
            const std::size_t cend = std::min(c0 + bn, lk);
            for (std::size_t i = r0; i < rend; ++i) {
                const std::size_t limit = causal ? std::min(cend, offset + i + 1) : cend;
                if (limit <= c0) {
                    continue;  // tile fully masked for this row
                }
                float* trow = tile.data() + (i - r0) * bn;
                float tmax = -std::numeric_limits<float>::infinity();
                for (std::size_t j = c0; j < limit; ++j) {
                    const float s = scale * dot(q.row(i), k.row(j), d);
                    trow[j - c0] = s;
                    tmax = std::max(tmax, s);
                }
                const float new_max = std::max(run_max[i], tmax);
                const float rescale = (run_sum[i] > 0.0f) ? std::exp(run_max[i] - new_max) : 0.0f;
                float* orow = res.output.row(i);
                if (rescale != 1.0f) {
                    run_sum[i] *= rescale;
                    for (std::size_t c = 0; c < dv; ++c) {
                        orow[c] *= rescale;
                    }
                }
                for (std::size_t j = c0; j < limit; ++j) {
                    const float w = std::exp(trow[j - c0] - new_max);
                    run_sum[i] += w;
                    const float* vrow = v.row(j);
                    for (std::size_t c = 0; c < dv; ++c) {
                        orow[c] += w * vrow[c];
                    }
                }
                run_max[i] = new_max;
            }
        }
    }
    for (std::size_t i = 0; i < lq; ++i) {
        const float inv = 1.0f / run_sum[i];
        float* orow = res.output.row(i);
        for (std::size_t c = 0; c < dv; ++c) {
            orow[c] *= inv;
        }
        res.lse[i] = run_max[i] + std::log(run_sum[i]);
    }

    // Pass 2: recompute tile scores and accumulate normalized weights column-wise,
    // top to bottom, so per-column accumulation order is fixed.
    for (std::size_t c0 = 0; c0 < lk; c0 += bn) {
        const std::size_t cend = std::min(c0 + bn, lk);
        for (std::size_t r0 = 0; r0 < lq; r0 += bm) {
            const std::size_t rend = std::min(r0 + bm, lq);
            for (std::size_t i = r0; i < rend; ++i) {
                const std::size_t limit = causal ? std::min(cend, offset + i + 1) : cend;
                for (std::size_t j = c0; j < limit; ++j) {
                    const float s = scale * dot(q.row(i), k.row(j), d);
                    res.a_cumul[j] += std::exp(s - res.lse[i]);
                }
            }
        }
    }
    return res;
}

std::pair<Vector, Vector> decode_attention(const Vector& q_row, const Matrix& keys,
                                           const Matrix& values, float scale) {
    if (keys.rows == 0) {
        throw std::invalid_argument("decode_attention: empty key set");
    }
    if (q_row.size() != keys.cols) {
        throw std::invalid_argument("decode_attention: query dimension mismatch");
    }
    if (values.rows != keys.rows) {
        throw std::invalid_argument("decode_attention: k/v token count mismatch");
    }
    Vector attn(keys.rows);
    for (std::size_t j = 0; j < keys.rows; ++j) {
        attn[j] = scale * dot(q_row.data(), keys.row(j), keys.cols);
    }
    softmax_inplace(attn.data(), attn.size());
    Vector out(values.cols, 0.0f);
    for (std::size_t j = 0; j < values.rows; ++j) {
        const float* vrow = values.row(j);
        for (std::size_t c = 0; c < values.cols; ++c) {
            out[c] += attn[j] * vrow[c];
        }
    }
    return {std::move(out), std::move(attn)};
}

}  // namespace minikv
