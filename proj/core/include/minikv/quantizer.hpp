#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "minikv/matrix.hpp"

namespace minikv {

// Grouping layout for 2-bit quantization.
//   PerChannel: groups run along the token axis within each channel (key layout).
//   PerToken:   groups run along the channel axis within each token (value layout).
enum class GroupAxis { PerChannel, PerToken };

struct GroupQuantParams {
    float scale = 0.0f;
    float zero_point = 0.0f;
};

inline constexpr std::size_t kCodesPerWord = 16;
inline constexpr std::size_t kDefaultGroupSize = 16;

// Bit-packed 2-bit codes plus per-group scale/zero metadata.
// Storage grows block-wise: each appended token block is grouped independently,
// so group boundaries never straddle a block boundary. Within a block the code
// stream is channel-major for PerChannel and token-major for PerToken; the
// packed word stream is continuous across blocks (little-end-first 2-bit fields).
struct QuantizedTensor {
    GroupAxis axis = GroupAxis::PerToken;
    std::size_t group_size = kDefaultGroupSize;
    std::size_t logical_rows = 0;  // tokens
    std::size_t logical_cols = 0;  // channels
    std::vector<std::uint32_t> packed_words;
    std::vector<GroupQuantParams> params;
    std::vector<std::size_t> block_rows;  // token rows per appended block
    std::size_t total_codes = 0;

    void push_code(std::uint8_t code);
    std::uint8_t code_at(std::size_t index) const;
};

// Asymmetric min/max 2-bit quantization of one group:
//   zero_point = min, scale = (max - min) / 3,
//   code = round-half-away-from-zero((v - zero_point) / scale), clamped to [0,3].
// Constant groups get scale = 0 and all-zero codes.
std::pair<std::vector<std::uint8_t>, GroupQuantParams> quantize_group(std::span<const float> values);

// v = code * scale + zero_point. scale = 0 groups dequantize to zero_point exactly.
std::vector<float> dequantize_group(std::span<const std::uint8_t> codes,
                                    const GroupQuantParams& params);

// Pack 2-bit codes into 32-bit words, 16 per word, code i at bits 2*(i%16)..2*(i%16)+1.
std::vector<std::uint32_t> pack_codes(std::span<const std::uint8_t> codes);

// Exact inverse of pack_codes on the first `count` codes.
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint32_t> words, std::size_t count);

// Quantize a whole matrix as a single token block.
QuantizedTensor quantize_matrix(const Matrix& m, GroupAxis axis,
                                std::size_t group_size = kDefaultGroupSize);

// Quantize `block` (token rows x channels) and append its groups to t.
void append_block(QuantizedTensor& t, const Matrix& block);

// Restore the logical_rows x logical_cols matrix.
Matrix dequantize_matrix(const QuantizedTensor& t);

}  // namespace minikv
