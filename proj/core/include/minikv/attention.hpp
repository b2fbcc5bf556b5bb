#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

#include "minikv/matrix.hpp"

namespace minikv {

// Tile sizes for the two-pass kernel: block_m query rows, block_n key columns.
struct TileConfig {
    std::size_t block_m = 64;
    std::size_t block_n = 64;
};

struct AttentionResult {
    Matrix output;    // l_query x d_head
    Vector lse;       // per query row: log of the softmax denominator (max-shifted back)
    Vector a_cumul;   // per key column: sum of attention weights over all query rows
    // Auxiliary float elements allocated beyond inputs/outputs. Used to check the
    // linear-memory contract: bounded by c*(l_query + l_key) + block_m*block_n.
    std::size_t aux_elements = 0;
};

inline float default_scale(std::size_t d_head) {
    return 1.0f / static_cast<float>(std::sqrt(static_cast<double>(d_head)));
}

// Two-pass tiled causal/full attention. Pass 1 runs FlashAttention-style online
// softmax over block_n tiles, producing the output and per-row LSE. Pass 2
// recomputes tile scores, normalizes each row by exp(score - lse[row]), and
// accumulates per-column sums in a fixed top-to-bottom row order.
// The full attention matrix is never materialized.
//
// Causal convention for l_query < l_key: query i attends keys 0..(l_key - l_query + i).
// Masked-out positions contribute exactly 0 to a_cumul.
AttentionResult selective_flash_attn(const Matrix& q, const Matrix& k, const Matrix& v,
                                     float scale, bool causal, TileConfig tiles);

// Single-query attention over an explicit key/value set (decode path).
// Returns (output row, attention row). The attention row sums to 1.
std::pair<Vector, Vector> decode_attention(const Vector& q_row, const Matrix& keys,
                                           const Matrix& values, float scale);

}  // namespace minikv
