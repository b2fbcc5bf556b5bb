#include "minikv/snapshot.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace minikv {

namespace {

constexpr char kMagic[4] = {'M', 'K', 'V', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(buf, 8);
}

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) {
        throw std::runtime_error("snapshot: truncated file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    }
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) {
        throw std::runtime_error("snapshot: truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return v;
}

float read_f32(std::istream& in) {
    const std::uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_tensor(std::ostream& out, const QuantizedTensor& t) {
    write_u32(out, t.axis == GroupAxis::PerChannel ? 0u : 1u);
    write_u64(out, t.logical_rows);
    write_u64(out, t.block_rows.size());
    for (std::size_t b : t.block_rows) {
        write_u64(out, b);
    }
    write_u64(out, t.packed_words.size());
    for (std::uint32_t w : t.packed_words) {
        write_u32(out, w);
    }
    write_u64(out, t.params.size());
    for (const auto& p : t.params) {
        write_f32(out, p.scale);
        write_f32(out, p.zero_point);
    }
}

QuantizedTensor read_tensor(std::istream& in, std::size_t d, std::size_t group_size) {
    QuantizedTensor t;
    t.axis = read_u32(in) == 0u ? GroupAxis::PerChannel : GroupAxis::PerToken;
    t.group_size = group_size;
    t.logical_cols = d;
    t.logical_rows = read_u64(in);
    t.block_rows.resize(read_u64(in));
    for (std::size_t& b : t.block_rows) {
        b = read_u64(in);
    }
    t.packed_words.resize(read_u64(in));
    for (std::uint32_t& w : t.packed_words) {
        w = read_u32(in);
    }
    t.params.resize(read_u64(in));
    for (auto& p : t.params) {
        p.scale = read_f32(in);
        p.zero_point = read_f32(in);
    }
    // Reconstruct the code count from the block structure.
    std::size_t codes = 0;
    for (std::size_t rows : t.block_rows) {
        codes += rows * d;
    }
    t.total_codes = codes;
    if (t.packed_words.size() != (codes + kCodesPerWord - 1) / kCodesPerWord) {
        throw std::runtime_error("snapshot: packed word count inconsistent");
    }
    return t;
}

void write_matrix(std::ostream& out, const Matrix& m) {
    write_u64(out, m.rows);
    for (float v : m.data) {
        write_f32(out, v);
    }
}

Matrix read_matrix(std::istream& in, std::size_t d) {
    const std::uint64_t rows = read_u64(in);
    Matrix m(rows, d);
    for (float& v : m.data) {
        v = read_f32(in);
    }
    return m;
}

}  // namespace

void save_cache(const KVCacheLayer& cache, std::ostream& out) {
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, cache.d);
    write_u64(out, cache.n_r);
    write_u64(out, cache.group_size);
    write_u64(out, cache.mode == QuantMode::TwoBit ? 0u : 1u);
    write_u64(out, cache.tokens_quantized);
    write_tensor(out, cache.q_key);
    write_tensor(out, cache.q_value);
    write_matrix(out, cache.fp_key);
    write_matrix(out, cache.fp_value);
    write_matrix(out, cache.r_key);
    write_matrix(out, cache.r_value);
    if (!out) {
        throw std::runtime_error("snapshot: write failed");
    }
}

void save_cache(const KVCacheLayer& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("snapshot: cannot open " + path);
    }
    save_cache(cache, out);
}

KVCacheLayer load_cache(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("snapshot: bad magic");
    }
    if (read_u32(in) != kVersion) {
        throw std::runtime_error("snapshot: unsupported version");
    }
    const std::size_t d = read_u64(in);
    const std::size_t n_r = read_u64(in);
    const std::size_t group_size = read_u64(in);
    const QuantMode mode = read_u64(in) == 0 ? QuantMode::TwoBit : QuantMode::Identity;
    KVCacheLayer cache = make_cache(d, n_r, group_size, mode);
    cache.tokens_quantized = read_u64(in);
    cache.q_key = read_tensor(in, d, group_size);
    cache.q_value = read_tensor(in, d, group_size);
    cache.fp_key = read_matrix(in, d);
    cache.fp_value = read_matrix(in, d);
    cache.r_key = read_matrix(in, d);
    cache.r_value = read_matrix(in, d);
    if (cache.r_key.rows != cache.r_value.rows || cache.r_key.rows >= n_r) {
        throw std::runtime_error("snapshot: residual buffer state invalid");
    }
    return cache;
}

KVCacheLayer load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("snapshot: cannot open " + path);
    }
    return load_cache(in);
}

}  // namespace minikv
