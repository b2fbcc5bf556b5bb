#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "minikv/quantizer.hpp"
#include "minikv/rng.hpp"
#include "oracles.hpp"

using namespace minikv;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (float& v : m.data) {
        v = rng.next_gaussian() * 3.0f;
    }
    return m;
}

}  // namespace

TEST_CASE("constant group quantizes to scale zero and exact roundtrip") {
    const std::vector<float> g = {5, 5, 5, 5};
    auto [codes, params] = quantize_group(g);
    CHECK(params.scale == 0.0f);
    CHECK(params.zero_point == 5.0f);
    for (std::uint8_t c : codes) {
        CHECK(c == 0);
    }
    const std::vector<float> back = dequantize_group(codes, params);
    for (float v : back) {
        CHECK(v == 5.0f);
    }
}

TEST_CASE("grid-aligned group roundtrips exactly") {
    const std::vector<float> g = {0, 1, 2, 3};
    auto [codes, params] = quantize_group(g);
    CHECK(params.scale == 1.0f);
    CHECK(params.zero_point == 0.0f);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(codes[i] == static_cast<std::uint8_t>(i));
    }
    const std::vector<float> back = dequantize_group(codes, params);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back[i] == g[i]);
    }
}

TEST_CASE("non-finite input rejected") {
    const std::vector<float> g = {1.0f, std::nanf(""), 2.0f};
    CHECK_THROWS(quantize_group(g));
}

TEST_CASE("dequantize single codes") {
    GroupQuantParams p{2.0f, -1.0f};
    const std::vector<std::uint8_t> lo = {0};
    const std::vector<std::uint8_t> hi = {3};
    CHECK(dequantize_group(lo, p)[0] == -1.0f);
    CHECK(dequantize_group(hi, p)[0] == 5.0f);
    const std::vector<std::uint8_t> bad = {4};
    CHECK_THROWS(dequantize_group(bad, p));
}

TEST_CASE("roundtrip error bounded by half a scale step") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<float> g(16);
        for (float& v : g) {
            v = rng.next_gaussian() * 10.0f;
        }
        auto [codes, params] = quantize_group(g);
        const std::vector<float> back = dequantize_group(codes, params);
        const std::vector<float> ref = oracles::quant_roundtrip_ref(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(std::abs(back[i] - g[i]) <= params.scale / 2.0f + 1e-6f);
            CHECK(back[i] == doctest::Approx(ref[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("pack hand cases") {
    std::vector<std::uint8_t> threes(16, 3);
    CHECK(pack_codes(threes) == std::vector<std::uint32_t>{0xFFFFFFFFu});
    std::vector<std::uint8_t> one(16, 0);
    one[0] = 1;
    CHECK(pack_codes(one) == std::vector<std::uint32_t>{0x00000001u});
}

TEST_CASE("unpack hand cases") {
    const std::vector<std::uint32_t> zero = {0u};
    for (std::uint8_t c : unpack_codes(zero, 16)) {
        CHECK(c == 0);
    }
    const std::vector<std::uint32_t> full = {0xFFFFFFFFu};
    for (std::uint8_t c : unpack_codes(full, 16)) {
        CHECK(c == 3);
    }
    CHECK_THROWS(unpack_codes(full, 17));
}

TEST_CASE("pack/unpack bijection on seeded arrays") {
    Rng rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 200;
        std::vector<std::uint8_t> codes(n);
        for (auto& c : codes) {
            c = static_cast<std::uint8_t>(rng.next_u64() & 3);
        }
        const auto words = pack_codes(codes);
        CHECK(words.size() == (n + 15) / 16);
        CHECK(unpack_codes(words, n) == codes);
    }
}

TEST_CASE("group counting by layout") {
    Rng rng(23);
    const Matrix col = random_matrix(rng, 16, 1);
    CHECK(quantize_matrix(col, GroupAxis::PerChannel, 16).params.size() == 1);
    const Matrix row = random_matrix(rng, 1, 32);
    CHECK(quantize_matrix(row, GroupAxis::PerToken, 16).params.size() == 2);
    CHECK_THROWS(quantize_matrix(Matrix(), GroupAxis::PerToken, 16));
}

TEST_CASE("matrix roundtrip within per-group half step on both axes") {
    Rng rng(24);
    const Matrix m = random_matrix(rng, 128, 64);
    for (GroupAxis axis : {GroupAxis::PerChannel, GroupAxis::PerToken}) {
        const QuantizedTensor t = quantize_matrix(m, axis, 16);
        const Matrix back = dequantize_matrix(t);
        REQUIRE(back.rows == m.rows);
        REQUIRE(back.cols == m.cols);
        float max_scale = 0.0f;
        for (const auto& p : t.params) {
            max_scale = std::max(max_scale, p.scale);
        }
        for (std::size_t n = 0; n < m.data.size(); ++n) {
            CHECK(std::abs(back.data[n] - m.data[n]) <= max_scale / 2.0f + 1e-6f);
        }
    }
}

TEST_CASE("constant matrix restores exactly") {
    Matrix m(8, 16);
    for (float& v : m.data) {
        v = -2.5f;
    }
    const Matrix back = dequantize_matrix(quantize_matrix(m, GroupAxis::PerToken, 16));
    for (float v : back.data) {
        CHECK(v == -2.5f);
    }
}

TEST_CASE("per-token and per-channel layouts are transpose-duals") {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 1 + rng.next_u64() % 40;
        const std::size_t cols = 1 + rng.next_u64() % 40;
        const Matrix m = random_matrix(rng, rows, cols);
        const QuantizedTensor a = quantize_matrix(m, GroupAxis::PerToken, 16);
        const QuantizedTensor b = quantize_matrix(transpose(m), GroupAxis::PerChannel, 16);
        REQUIRE(a.params.size() == b.params.size());
        REQUIRE(a.total_codes == b.total_codes);
        for (std::size_t i = 0; i < a.params.size(); ++i) {
            CHECK(a.params[i].scale == b.params[i].scale);
            CHECK(a.params[i].zero_point == b.params[i].zero_point);
        }
        CHECK(a.packed_words == b.packed_words);
    }
}

TEST_CASE("requantizing a dequantized tensor keeps the codes") {
    Rng rng(26);
    const Matrix m = random_matrix(rng, 32, 32);
    const QuantizedTensor t1 = quantize_matrix(m, GroupAxis::PerChannel, 16);
    const Matrix once = dequantize_matrix(t1);
    const QuantizedTensor t2 = quantize_matrix(once, GroupAxis::PerChannel, 16);
    CHECK(t1.packed_words == t2.packed_words);
    const Matrix twice = dequantize_matrix(t2);
    for (std::size_t n = 0; n < once.data.size(); ++n) {
        CHECK(once.data[n] == doctest::Approx(twice.data[n]).epsilon(1e-6));
    }
}

TEST_CASE("short final group is quantized with its own params") {
    Rng rng(27);
    const Matrix m = random_matrix(rng, 20, 4);  // 16 + 4 along the token axis
    const QuantizedTensor t = quantize_matrix(m, GroupAxis::PerChannel, 16);
    CHECK(t.params.size() == 4 * 2);
    const Matrix back = dequantize_matrix(t);
    float max_scale = 0.0f;
    for (const auto& p : t.params) {
        max_scale = std::max(max_scale, p.scale);
    }
    for (std::size_t n = 0; n < m.data.size(); ++n) {
        CHECK(std::abs(back.data[n] - m.data[n]) <= max_scale / 2.0f + 1e-6f);
    }
}

TEST_CASE("corrupted group count is detected") {
    Rng rng(28);
    QuantizedTensor t = quantize_matrix(random_matrix(rng, 16, 16), GroupAxis::PerToken, 16);
    t.params.pop_back();
    CHECK_THROWS(dequantize_matrix(t));
}
