// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "minikv/accounting.hpp"
#include "minikv/attention.hpp"
#include "minikv/cache_engine.hpp"
#include "minikv/harness.hpp"
#include "minikv/pipeline.hpp"
#include "minikv/quantizer.hpp"
#include "minikv/rng.hpp"
#include "minikv/selection.hpp"
#include "oracles.hpp"

using namespace minikv;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << index << ": " << name;
    if (!detail.empty()) {
        std::cout << " (" << detail << ")";
    }
    std::cout << "\n";
    if (!ok) {
        ++failures;
    }
}

// Runs the CLI, capturing stdout. Returns (exit code, output).
std::pair<int, std::string> run_cli(const std::string& args) {
    const std::string cmd = std::string(MINIKV_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return {-1, ""};
    }
    std::string out;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        out.append(buf.data(), n);
    }
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (float& v : m.data) {
        v = rng.next_gaussian();
    }
    return m;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_1_memory_formulas() {
    const auto start = std::chrono::steady_clock::now();
    auto [code, out] = run_cli(
        "mem --layers 32 --hidden 4096 --heads 32 --prompt 4096 --gen 512 "
        "--budget 0.25,0.25");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = code == 0 && out.find("2.4 GB") != std::string::npos &&
                    out.find("0.33 GB") != std::string::npos &&
                    out.find("86%") != std::string::npos && secs < 1.0;
    std::ostringstream detail;
    detail << "exit " << code << ", " << secs << " s";
    report(1, "memory accounting table shows 2.4 GB / 0.33 GB / 86%", ok, detail.str());
}

void criterion_2_compression_factor() {
    const ModelDims dims{32, 4096, 32};
    const double factor = qhitter_factor(dims);
    const CompressionReport r =
        compression_report(dims, {4096, 512}, {0.25, 0.25}, 0.15);
    const bool ok = std::abs(factor - 3.76) <= 0.005 &&
                    std::abs(r.h2o_parity_alpha - 0.15) <= 0.01 &&
                    std::abs(r.qhitter_parity_alpha - 0.59) <= 0.01;
    std::ostringstream detail;
    detail << "factor " << factor << ", parities " << r.h2o_parity_alpha << " / "
           << r.qhitter_parity_alpha;
    report(2, "4-bit factor 3.76 and parity budgets 15% / 59%", ok, detail.str());
}

void criterion_3_attention_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1234);
    const std::array<std::size_t, 3> dims = {8, 16, 64};
    int cases = 0;
    bool ok = true;
    double worst = 0.0;
    while (cases < 210 && ok) {
        const std::size_t d = dims[rng.next_u64() % dims.size()];
        const std::size_t lk = 1 + rng.next_u64() % 512;
        const bool causal = (rng.next_u64() & 1) != 0;
        const std::size_t lq = causal ? 1 + rng.next_u64() % lk : 1 + rng.next_u64() % 512;
        Matrix q = random_matrix(rng, lq, d);
        Matrix k = random_matrix(rng, lk, d);
        Matrix v = random_matrix(rng, lk, d);
        const TileConfig tiles{1 + rng.next_u64() % 96, 1 + rng.next_u64() % 96};
        const AttentionResult got =
            selective_flash_attn(q, k, v, default_scale(d), causal, tiles);
        const oracles::AttnRef ref =
            oracles::naive_attention(q, k, v, default_scale(d), causal);
        for (std::size_t n = 0; n < ref.output.data.size(); ++n) {
            worst = std::max(worst,
                             std::abs(static_cast<double>(got.output.data[n]) -
                                      static_cast<double>(ref.output.data[n])));
        }
        for (std::size_t j = 0; j < lk; ++j) {
            worst = std::max(worst, std::abs(static_cast<double>(got.a_cumul[j]) -
                                             static_cast<double>(ref.a_cumul[j])));
        }
        ok = worst < 1e-4;
        ++cases;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok = ok && secs < 60.0;
    std::ostringstream detail;
    detail << cases << " cases, max dev " << worst << ", " << secs << " s";
    report(3, "two-pass attention matches the quadratic reference within 1e-4", ok,
           detail.str());
}

void criterion_4_linear_memory() {
    Rng rng(55);
    bool ok = true;
    std::size_t prev = 0;
    std::ostringstream detail;
    for (std::size_t l : {128, 256, 512, 1024}) {
        const Matrix x = random_matrix(rng, l, 16);
        const AttentionResult r =
            selective_flash_attn(x, x, x, default_scale(16), true, {32, 32});
        if (prev != 0) {
            const double ratio =
                static_cast<double>(r.aux_elements) / static_cast<double>(prev);
            ok = ok && ratio <= 2.2;
            detail << (detail.str().empty() ? "" : ", ") << "x" << ratio;
        }
        prev = r.aux_elements;
    }
    report(4, "auxiliary memory doubles by at most 2.2x when l doubles", ok, detail.str());
}

void criterion_5_quantization() {
    Rng rng(56);
    bool ok = true;
    // 10^4 roundtrips
    for (int trial = 0; trial < 10000 && ok; ++trial) {
        std::vector<float> g(16);
        for (float& v : g) {
            v = rng.next_gaussian() * 8.0f;
        }
        auto [codes, params] = quantize_group(g);
        const std::vector<float> back = dequantize_group(codes, params);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ok = ok && std::abs(back[i] - g[i]) <= params.scale / 2.0f + 1e-6f;
        }
    }
    // 10^4 pack/unpack bijections
    for (int trial = 0; trial < 10000 && ok; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 64;
        std::vector<std::uint8_t> codes(n);
        for (auto& c : codes) {
            c = static_cast<std::uint8_t>(rng.next_u64() & 3);
        }
        ok = ok && unpack_codes(pack_codes(codes), n) == codes;
    }
    // transpose duality on 100 matrices
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const std::size_t rows = 1 + rng.next_u64() % 48;
        const std::size_t cols = 1 + rng.next_u64() % 48;
        const Matrix m = random_matrix(rng, rows, cols);
        const QuantizedTensor a = quantize_matrix(m, GroupAxis::PerToken, 16);
        const QuantizedTensor b = quantize_matrix(transpose(m), GroupAxis::PerChannel, 16);
        ok = ok && a.packed_words == b.packed_words && a.params.size() == b.params.size();
    }
    report(5, "quantizer roundtrip bound, pack bijection, layout duality", ok);
}

void criterion_6_state_machine() {
    Rng rng(57);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const std::size_t gs = 4;
        const std::size_t n_r = gs * (1 + rng.next_u64() % 8);
        auto [cache, rep] = prefill(random_matrix(rng, 4, 8), random_matrix(rng, 4, 8),
                                    Vector(4, 1.0f), 4, 0, n_r, gs);
        const std::size_t appends = rng.next_u64() % 120;
        for (std::size_t i = 0; i < appends && ok; ++i) {
            Vector t(8);
            for (float& v : t) {
                v = rng.next_gaussian();
            }
            decode_append(cache, t, t);
            ok = ok && cache.tokens_residual() < n_r;
        }
        ok = ok && cache.total_tokens() == 4 + appends;
    }
    // flush counting at the published settings
    auto [cache, rep] = prefill(random_matrix(rng, 16, 16), random_matrix(rng, 16, 16),
                                Vector(16, 1.0f), 16, 0, 128, 16);
    const std::size_t base_blocks = cache.q_key.block_rows.size();
    for (int i = 0; i < 1000; ++i) {
        Vector t(16);
        for (float& v : t) {
            v = rng.next_gaussian();
        }
        decode_append(cache, t, t);
    }
    ok = ok && cache.q_key.block_rows.size() - base_blocks == 7 &&
         cache.tokens_residual() == 104;
    report(6, "residual buffer state machine and flush counting", ok);
}

void criterion_7_degradation() {
    RunConfig config;
    config.seed = 2024;
    config.layers = 4;
    config.d = 64;
    config.l_prompt = 256;
    config.steps = 32;
    config.budget = {1.0, 0.0};  // keep-all: only quantization error remains
    const RunTrace a = run_from_config(config);
    const RunTrace b = run_from_config(config);
    RunConfig ident = config;
    ident.mode = QuantMode::Identity;
    const RunTrace c = run_from_config(ident);
    const bool ok = std::isfinite(a.max_abs_dev) && a.max_abs_dev == b.max_abs_dev &&
                    a.max_abs_dev <= 10.0 * a.analytic_dev_bound &&
                    c.max_abs_dev <= 1e-5;
    std::ostringstream detail;
    detail << "dev " << a.max_abs_dev << " vs bound " << a.analytic_dev_bound
           << ", identity dev " << c.max_abs_dev;
    report(7, "keep-all degradation bounded and reproducible", ok, detail.str());
}

void criterion_8_allocation() {
    bool ok = true;
    Rng rng(58);
    for (int trial = 0; trial < 50 && ok; ++trial) {
        const std::size_t x = 10 + rng.next_u64() % 300;
        const std::size_t layers = 2 + rng.next_u64() % 30;
        const auto p = allocate_pyramid(x, layers, 7);
        const double sum = static_cast<double>(std::accumulate(
            p.per_layer_hh.begin(), p.per_layer_hh.end(), std::size_t{0}));
        ok = ok && std::abs(sum / static_cast<double>(layers) - static_cast<double>(x)) <= 1.0;
        const double xd = static_cast<double>(x) / 7.0;
        ok = ok &&
             p.per_layer_hh.front() ==
                 static_cast<std::size_t>(std::llround(2.0 * static_cast<double>(x) - xd)) &&
             p.per_layer_hh.back() == static_cast<std::size_t>(std::llround(xd));
        // d = 1 degenerates to uniform
        const auto flat = allocate_pyramid(x, layers, 1);
        const auto uni = allocate_uniform(x * layers, layers);
        ok = ok && flat.per_layer_hh == uni.per_layer_hh;
        // variance allocators hit the total exactly
        Vector vars(layers);
        for (float& v : vars) {
            v = rng.next_uniform() * 3.0f;
        }
        for (VarianceMode mode : {VarianceMode::Prop, VarianceMode::Inv}) {
            const auto alloc = allocate_variance(vars, x * layers, mode);
            ok = ok && std::accumulate(alloc.per_layer_hh.begin(), alloc.per_layer_hh.end(),
                                       std::size_t{0}) == x * layers;
        }
    }
    report(8, "pyramid mean/endpoints, depth-1 degeneracy, exact variance sums", ok);
}

void criterion_9_persistence() {
    const std::size_t l = 128, d = 16, steps = 48;
    const Matrix x = gen_workload(777, l, d, Distribution::PowerLawAttention);
    const AttentionResult attn =
        selective_flash_attn(x, x, x, default_scale(d), true, {32, 32});
    std::vector<Vector> qs, ks;
    Rng rng = Rng(777).stream(0xE0);
    for (std::size_t s = 0; s < steps; ++s) {
        Vector q(d), k(d);
        for (float& v : q) v = rng.next_gaussian();
        for (float& v : k) v = rng.next_gaussian();
        qs.push_back(std::move(q));
        ks.push_back(std::move(k));
    }
    const std::size_t hh = 48, rw = 16;
    const H2OBaselineTrace trace =
        h2o_dynamic_baseline(x, attn.a_cumul, qs, ks, hh, rw, default_scale(d));
    const std::vector<float> scores(attn.a_cumul.begin(), attn.a_cumul.end());
    const auto ref = oracles::h2o_resort(x, scores, qs, ks, hh, rw, default_scale(d));
    bool ok = trace.kept_per_step.size() == ref.size();
    for (std::size_t s = 0; ok && s < ref.size(); ++s) {
        std::vector<std::size_t> got = trace.kept_per_step[s];
        std::vector<std::size_t> want = ref[s];
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        ok = got == want;
    }
    const SelectionResult sel = select_token_counts(attn.a_cumul, hh, rw);
    const PersistenceReport report_hh = persistence_analysis(trace, sel.hh);
    float prev = 1.0f;
    for (float f : report_hh.fractions) {
        ok = ok && f >= 0.0f && f <= 1.0f && f <= prev + 1e-7f;
        prev = f;
    }
    // full budget keeps every prefill heavy hitter
    const H2OBaselineTrace full =
        h2o_dynamic_baseline(x, attn.a_cumul, qs, ks, l + steps, 0, default_scale(d));
    const PersistenceReport at_full = persistence_analysis(full, sel.hh);
    for (float f : at_full.fractions) {
        ok = ok && f == 1.0f;
    }
    std::ostringstream detail;
    detail << "final retained fraction " << report_hh.final_fraction << " (reported only)";
    report(9, "persistence fractions bounded, monotone, and reference-exact", ok,
           detail.str());
}

void criterion_10_determinism() {
    const std::string t1 = "acceptance_trace_1.json";
    const std::string t2 = "acceptance_trace_2.json";
    auto [c1, o1] = run_cli("--seed 7 run --layers 2 --dim 32 --prompt 64 --steps 8 "
                            "--nr 32 --out " + t1);
    auto [c2, o2] = run_cli("--seed 7 run --layers 2 --dim 32 --prompt 64 --steps 8 "
                            "--nr 32 --out " + t2);
    const std::string a = read_file(t1);
    const std::string b = read_file(t2);
    const bool ok = c1 == 0 && c2 == 0 && !a.empty() && a == b;
    std::remove(t1.c_str());
    std::remove(t2.c_str());
    report(10, "repeated seeded runs emit byte-identical traces", ok);
}

}  // namespace

int main() {
    criterion_1_memory_formulas();
    criterion_2_compression_factor();
    criterion_3_attention_equivalence();
    criterion_4_linear_memory();
    criterion_5_quantization();
    criterion_6_state_machine();
    criterion_7_degradation();
    criterion_8_allocation();
    criterion_9_persistence();
    criterion_10_determinism();
    if (failures > 0) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all acceptance criteria passed\n";
    return 0;
}
