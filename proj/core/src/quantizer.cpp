#include "minikv/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minikv {

void QuantizedTensor::push_code(std::uint8_t code) {
    const std::size_t word = total_codes / kCodesPerWord;
    const std::size_t shift = 2 * (total_codes % kCodesPerWord);
    if (word == packed_words.size()) {
        packed_words.push_back(0);
    }
    packed_words[word] |= static_cast<std::uint32_t>(code & 0x3u) << shift;
    ++total_codes;
}

std::uint8_t QuantizedTensor::code_at(std::size_t index) const {
    if (index >= total_codes) {
        throw std::out_of_range("QuantizedTensor: code index out of range");
    }
    const std::size_t word = index / kCodesPerWord;
    const std::size_t shift = 2 * (index % kCodesPerWord);
    return static_cast<std::uint8_t>((packed_words[word] >> shift) & 0x3u);
}

std::pair<std::vector<std::uint8_t>, GroupQuantParams> quantize_group(std::span<const float> values) {
    if (values.empty()) {
        throw std::invalid_argument("quantize_group: empty group");
    }
    float lo = values[0];
    float hi = values[0];
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw std::domain_error("quantize_group: non-finite input");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    GroupQuantParams params;
    params.zero_point = lo;
    params.scale = (hi - lo) / 3.0f;
    std::vector<std::uint8_t> codes(values.size(), 0);
    if (params.scale > 0.0f) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            // round-half-away-from-zero, then clamp
            const float q = std::round((values[i] - params.zero_point) / params.scale);
            codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0f, 3.0f));
        }
    }
    return {std::move(codes), params};
}

std::vector<float> dequantize_group(std::span<const std::uint8_t> codes,
                                    const GroupQuantParams& params) {
    std::vector<float> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 3) {
            throw std::domain_error("dequantize_group: code out of range");
        }
        out[i] = static_cast<float>(codes[i]) * params.scale + params.zero_point;
    }
    return out;
}

std::vector<std::uint32_t> pack_codes(std::span<const std::uint8_t> codes) {
    std::vector<std::uint32_t> words((codes.size() + kCodesPerWord - 1) / kCodesPerWord, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 3) {
            throw std::domain_error("pack_codes: code out of range");
        }
        words[i / kCodesPerWord] |=
            static_cast<std::uint32_t>(codes[i]) << (2 * (i % kCodesPerWord));
    }
    return words;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint32_t> words, std::size_t count) {
    if (count > words.size() * kCodesPerWord) {
        throw std::invalid_argument("unpack_codes: count exceeds capacity");
    }
    std::vector<std::uint8_t> codes(count);
    for (std::size_t i = 0; i < count; ++i) {
        codes[i] = static_cast<std::uint8_t>((words[i / kCodesPerWord] >> (2 * (i % kCodesPerWord))) & 0x3u);
    }
    return codes;
}

namespace {

void append_group(QuantizedTensor& t, std::span<const float> values) {
    auto [codes, params] = quantize_group(values);
    t.params.push_back(params);
    for (std::uint8_t c : codes) {
        t.push_code(c);
    }
}

}  // namespace

void append_block(QuantizedTensor& t, const Matrix& block) {
    if (block.empty()) {
        throw std::invalid_argument("append_block: empty block");
    }
    if (t.logical_cols == 0) {
        t.logical_cols = block.cols;
    }
    if (block.cols != t.logical_cols) {
        throw std::invalid_argument("append_block: channel count mismatch");
    }
    const std::size_t gs = t.group_size;
    std::vector<float> scratch(gs);
    if (t.axis == GroupAxis::PerChannel) {
        // channel-major: for each channel, token groups within this block
        for (std::size_t c = 0; c < block.cols; ++c) {
            for (std::size_t g0 = 0; g0 < block.rows; g0 += gs) {
                const std::size_t glen = std::min(gs, block.rows - g0);
                for (std::size_t i = 0; i < glen; ++i) {
                    scratch[i] = block.at(g0 + i, c);
                }
                append_group(t, std::span<const float>(scratch.data(), glen));
            }
        }
    } else {
        // token-major: for each token, channel groups
        for (std::size_t r = 0; r < block.rows; ++r) {
            for (std::size_t g0 = 0; g0 < block.cols; g0 += gs) {
                const std::size_t glen = std::min(gs, block.cols - g0);
                append_group(t, std::span<const float>(block.row(r) + g0, glen));
            }
        }
    }
    t.block_rows.push_back(block.rows);
    t.logical_rows += block.rows;
}

QuantizedTensor quantize_matrix(const Matrix& m, GroupAxis axis, std::size_t group_size) {
    if (m.empty()) {
        throw std::invalid_argument("quantize_matrix: empty matrix");
    }
    if (group_size < 1) {
        throw std::invalid_argument("quantize_matrix: group_size must be >= 1");
    }
    QuantizedTensor t;
    t.axis = axis;
    t.group_size = group_size;
    t.logical_cols = m.cols;
    append_block(t, m);
    return t;
}

Matrix dequantize_matrix(const QuantizedTensor& t) {
    Matrix out(t.logical_rows, t.logical_cols);
    const std::size_t gs = t.group_size;
    std::size_t code_idx = 0;
    std::size_t group_idx = 0;
    std::size_t row0 = 0;
    for (std::size_t rows : t.block_rows) {
        if (t.axis == GroupAxis::PerChannel) {
            for (std::size_t c = 0; c < t.logical_cols; ++c) {
                for (std::size_t g0 = 0; g0 < rows; g0 += gs) {
                    const std::size_t glen = std::min(gs, rows - g0);
                    if (group_idx >= t.params.size()) {
                        throw std::runtime_error("dequantize_matrix: corrupted group count");
                    }
                    const GroupQuantParams& p = t.params[group_idx++];
                    for (std::size_t i = 0; i < glen; ++i) {
                        out.at(row0 + g0 + i, c) =
                            static_cast<float>(t.code_at(code_idx++)) * p.scale + p.zero_point;
                    }
                }
            }
        } else {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t g0 = 0; g0 < t.logical_cols; g0 += gs) {
                    const std::size_t glen = std::min(gs, t.logical_cols - g0);
                    if (group_idx >= t.params.size()) {
                        throw std::runtime_error("dequantize_matrix: corrupted group count");
                    }
                    const GroupQuantParams& p = t.params[group_idx++];
                    for (std::size_t i = 0; i < glen; ++i) {
                        out.at(row0 + r, g0 + i) =
                            static_cast<float>(t.code_at(code_idx++)) * p.scale + p.zero_point;
                    }
                }
            }
        }
        row0 += rows;
    }
    if (group_idx != t.params.size()) {
        throw std::runtime_error("dequantize_matrix: corrupted group count");
    }
    return out;
}

}  // namespace minikv
