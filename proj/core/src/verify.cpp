#include "minikv/verify.hpp"

#include <cmath>
#include <cstdlib>
#include <ostream>
#include <vector>

#include "minikv/accounting.hpp"
#include "minikv/attention.hpp"
#include "minikv/cache_engine.hpp"
#include "minikv/harness.hpp"
#include "minikv/matrix.hpp"
#include "minikv/pipeline.hpp"
#include "minikv/quantizer.hpp"
#include "minikv/rng.hpp"
#include "minikv/selection.hpp"

namespace minikv {

namespace {

struct Checker {
    std::ostream& out;
    bool ok = true;

    void check(const char* name, bool pass) {
        out << (pass ? "ok   " : "FAIL ") << name << "\n";
        ok = ok && pass;
    }
};

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (float& v : m.data) {
        v = rng.next_gaussian();
    }
    return m;
}

// Quadratic-memory reference used only for cross-checking here.
Matrix reference_attention_matrix(const Matrix& q, const Matrix& k, float scale, bool causal) {
    const std::size_t offset = causal ? (k.rows - q.rows) : 0;
    Matrix attn(q.rows, k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        const std::size_t limit = causal ? (offset + i + 1) : k.rows;
        Vector row(limit);
        for (std::size_t j = 0; j < limit; ++j) {
            row[j] = scale * dot(q.row(i), k.row(j), q.cols);
        }
        row = softmax_row(row);
        for (std::size_t j = 0; j < limit; ++j) {
            attn.at(i, j) = row[j];
        }
    }
    return attn;
}

}  // namespace

bool run_verify(std::uint64_t seed, std::ostream& out) {
    Checker c{out};
    Rng rng = Rng(seed).stream(0xFE);

    // numerics
    {
        Matrix m = random_matrix(rng, 3, 3);
        Matrix id(3, 3);
        id.at(0, 0) = id.at(1, 1) = id.at(2, 2) = 1.0f;
        c.check("numerics.identity_matmul",
                matmul(id, m).data == m.data && matmul(m, id).data == m.data);
        bool sums_ok = true;
        for (int t = 0; t < 50; ++t) {
            Vector x(1 + (rng.next_u64() % 32));
            for (float& v : x) {
                v = 1e4f * (rng.next_uniform() * 2.0f - 1.0f);
            }
            Vector sm = softmax_row(x);
            float s = 0.0f;
            for (float v : sm) s += v;
            sums_ok = sums_ok && std::abs(s - 1.0f) <= 1e-6f;
        }
        c.check("numerics.softmax_sums_to_one", sums_ok);
    }

    // attention
    {
        bool tile_ok = true, col_ok = true, lse_ok = true;
        for (int t = 0; t < 20; ++t) {
            const std::size_t l = 1 + (rng.next_u64() % 64);
            const std::size_t d = 8;
            const bool causal = (t % 2) == 0;
            Matrix q = random_matrix(rng, l, d);
            Matrix k = random_matrix(rng, l, d);
            Matrix v = random_matrix(rng, l, d);
            TileConfig tiles{1 + (rng.next_u64() % l), 1 + (rng.next_u64() % l)};
            AttentionResult res = selective_flash_attn(q, k, v, default_scale(d), causal, tiles);
            Matrix attn = reference_attention_matrix(q, k, default_scale(d), causal);
            for (std::size_t j = 0; j < l; ++j) {
                float col = 0.0f;
                for (std::size_t i = 0; i < l; ++i) {
                    col += attn.at(i, j);
                }
                col_ok = col_ok && std::abs(col - res.a_cumul[j]) <= 1e-4f * static_cast<float>(l);
            }
            Matrix o_ref = matmul(attn, v);
            for (std::size_t i = 0; i < o_ref.data.size(); ++i) {
                tile_ok = tile_ok && std::abs(o_ref.data[i] - res.output.data[i]) <= 1e-4f;
            }
            for (std::size_t i = 0; i < l; ++i) {
                // exp(lse) must reproduce the row's softmax denominator
                const std::size_t limit = causal ? (i + 1) : l;
                float m = -1e30f;
                for (std::size_t j = 0; j < limit; ++j) {
                    m = std::max(m, default_scale(d) * dot(q.row(i), k.row(j), d));
                }
                float denom = 0.0f;
                for (std::size_t j = 0; j < limit; ++j) {
                    denom += std::exp(default_scale(d) * dot(q.row(i), k.row(j), d) - m);
                }
                const float lse_ref = m + std::log(denom);
                lse_ok = lse_ok && std::abs(res.lse[i] - lse_ref) <= 1e-5f * std::abs(lse_ref) + 1e-5f;
            }
        }
        c.check("attention.tile_invariance", tile_ok);
        c.check("attention.column_sums", col_ok);
        c.check("attention.lse_consistency", lse_ok);

        bool linear_ok = true;
        std::size_t prev_aux = 0;
        for (std::size_t l = 128; l <= 1024; l *= 2) {
            Matrix q = random_matrix(rng, l, 8);
            Matrix k = random_matrix(rng, l, 8);
            Matrix v = random_matrix(rng, l, 8);
            AttentionResult res = selective_flash_attn(q, k, v, default_scale(8), true, {16, 16});
            if (prev_aux > 0) {
                linear_ok = linear_ok && static_cast<double>(res.aux_elements) /
                                                 static_cast<double>(prev_aux) <=
                                             2.2;
            }
            prev_aux = res.aux_elements;
        }
        c.check("attention.linear_memory", linear_ok);
    }

    // quantizer
    {
        bool bound_ok = true;
        for (int t = 0; t < 2000; ++t) {
            Vector g(1 + (rng.next_u64() % 16));
            for (float& v : g) {
                v = 10.0f * rng.next_gaussian();
            }
            auto [codes, params] = quantize_group(g);
            auto back = dequantize_group(codes, params);
            for (std::size_t i = 0; i < g.size(); ++i) {
                bound_ok = bound_ok && std::abs(back[i] - g[i]) <= params.scale / 2 + 1e-6f;
            }
        }
        c.check("quantizer.roundtrip_bound", bound_ok);

        bool pack_ok = true;
        for (int t = 0; t < 2000; ++t) {
            std::vector<std::uint8_t> codes(1 + (rng.next_u64() % 100));
            for (auto& x : codes) {
                x = static_cast<std::uint8_t>(rng.next_u64() % 4);
            }
            pack_ok = pack_ok && unpack_codes(pack_codes(codes), codes.size()) == codes;
        }
        c.check("quantizer.pack_bijection", pack_ok);

        bool dual_ok = true;
        for (int t = 0; t < 20; ++t) {
            Matrix m = random_matrix(rng, 32, 48);
            QuantizedTensor a = quantize_matrix(m, GroupAxis::PerToken);
            QuantizedTensor b = quantize_matrix(transpose(m), GroupAxis::PerChannel);
            dual_ok = dual_ok && a.params.size() == b.params.size();
            for (std::size_t i = 0; dual_ok && i < a.params.size(); ++i) {
                dual_ok = a.params[i].scale == b.params[i].scale &&
                          a.params[i].zero_point == b.params[i].zero_point;
            }
            dual_ok = dual_ok && a.packed_words == b.packed_words;
        }
        c.check("quantizer.transpose_duality", dual_ok);

        bool idem_ok = true;
        for (int t = 0; t < 20; ++t) {
            Matrix m = random_matrix(rng, 16, 16);
            QuantizedTensor q1 = quantize_matrix(m, GroupAxis::PerToken);
            QuantizedTensor q2 = quantize_matrix(dequantize_matrix(q1), GroupAxis::PerToken);
            idem_ok = idem_ok && q1.packed_words == q2.packed_words;
        }
        c.check("quantizer.idempotent_requantize", idem_ok);
    }

    // selection
    {
        bool size_ok = true, mono_ok = true;
        for (int t = 0; t < 50; ++t) {
            const std::size_t l = 16 + (rng.next_u64() % 240);
            Vector a(l);
            for (float& v : a) {
                v = rng.next_uniform();
            }
            CacheBudget b{0.05 + 0.4 * rng.next_uniform(), 0.05 + 0.4 * rng.next_uniform()};
            SelectionResult r = select_tokens(a, b, l);
            const std::size_t want =
                static_cast<std::size_t>(std::floor(b.alpha_hh * l)) +
                static_cast<std::size_t>(std::floor(b.alpha_rw * l));
            size_ok = size_ok && r.kept.size() == want;
            CacheBudget b2{std::min(b.alpha_hh + 0.1, 1.0 - b.alpha_rw), b.alpha_rw};
            SelectionResult r2 = select_tokens(a, b2, l);
            for (std::size_t idx : r.hh) {
                bool found = false;
                for (std::size_t j : r2.hh) {
                    found = found || j == idx;
                }
                mono_ok = mono_ok && found;
            }
        }
        c.check("selection.kept_size", size_ok);
        c.check("selection.topk_monotonicity", mono_ok);

        bool alloc_ok = true;
        for (int t = 0; t < 100; ++t) {
            const std::size_t layers = 1 + (rng.next_u64() % 48);
            const std::size_t total = rng.next_u64() % 4096;
            LayerAllocation u = allocate_uniform(total, layers);
            std::size_t sum = 0;
            for (std::size_t v : u.per_layer_hh) {
                sum += v;
            }
            alloc_ok = alloc_ok && sum == total;
            Vector vars(layers);
            for (float& v : vars) {
                v = rng.next_uniform();
            }
            for (VarianceMode mode : {VarianceMode::Prop, VarianceMode::Inv}) {
                LayerAllocation a = allocate_variance(vars, total, mode);
                sum = 0;
                for (std::size_t v : a.per_layer_hh) {
                    sum += v;
                }
                alloc_ok = alloc_ok && sum == total;
            }
        }
        c.check("selection.allocator_sums", alloc_ok);

        LayerAllocation p1 = allocate_pyramid(100, 8, 1);
        LayerAllocation un = allocate_uniform(800, 8);
        c.check("selection.pyramid_d1_uniform", p1.per_layer_hh == un.per_layer_hh);
    }

    // cache engine
    {
        bool state_ok = true;
        for (int t = 0; t < 100; ++t) {
            const std::size_t gs = 4;
            const std::size_t n_r = gs * (1 + (rng.next_u64() % 4));
            KVCacheLayer cache = make_cache(8, n_r, gs);
            Matrix k = random_matrix(rng, 4, 8);
            Matrix v = random_matrix(rng, 4, 8);
            Vector a(4, 1.0f);
            auto [cache2, report] = prefill(k, v, a, 4, 0, n_r, gs);
            cache = std::move(cache2);
            std::size_t total = cache.total_tokens();
            const std::size_t appends = rng.next_u64() % 64;
            for (std::size_t s = 0; s < appends; ++s) {
                Vector tk(8), tv(8);
                for (float& x : tk) x = rng.next_gaussian();
                for (float& x : tv) x = rng.next_gaussian();
                decode_append(cache, tk, tv);
                state_ok = state_ok && cache.tokens_residual() < cache.n_r;
                state_ok = state_ok && cache.total_tokens() == total + 1;
                total = cache.total_tokens();
            }
        }
        c.check("cache_engine.state_machine", state_ok);
    }

    // accounting
    {
        const ModelDims m{32, 4096, 32};
        const WorkloadDims w{4096, 512};
        const CacheBudget b{0.25, 0.25};
        c.check("accounting.full_bytes", kv_bytes(Method::Full, m, w) == 2415919104ull);
        c.check("accounting.minikv_bytes", kv_bytes(Method::MiniKV, m, w, b) == 335544320ull);
        c.check("accounting.qhitter_factor", std::abs(qhitter_factor(m) - 3.76) <= 0.005);
        c.check("accounting.ordering",
                kv_bytes(Method::Full, m, w) >= kv_bytes(Method::KIVI, m, w) &&
                    kv_bytes(Method::KIVI, m, w) >= kv_bytes(Method::MiniKV, m, w, b));
    }

    // harness
    {
        RunConfig cfg;
        cfg.seed = seed;
        cfg.layers = 2;
        cfg.d = 16;
        cfg.l_prompt = 32;
        cfg.steps = 4;
        cfg.n_r = 16;
        const std::string t1 = trace_to_json(run_from_config(cfg));
        const std::string t2 = trace_to_json(run_from_config(cfg));
        c.check("harness.trace_determinism", t1 == t2);

        Matrix prompt = gen_workload(seed, 32, 8, Distribution::Gaussian);
        Vector scores(32);
        for (std::size_t i = 0; i < 32; ++i) {
            scores[i] = static_cast<float>(32 - i);
        }
        std::vector<Vector> qs, ks;
        Rng drng = Rng(seed).stream(0xDD);
        for (int s = 0; s < 8; ++s) {
            Vector q(8), k(8);
            for (float& x : q) x = drng.next_gaussian();
            for (float& x : k) x = drng.next_gaussian();
            qs.push_back(q);
            ks.push_back(k);
        }
        H2OBaselineTrace trace = h2o_dynamic_baseline(prompt, scores, qs, ks, 8, 4, 0.35f);
        std::vector<std::size_t> hh(trace.kept_per_step[0].begin(), trace.kept_per_step[0].end());
        PersistenceReport rep = persistence_analysis(trace, hh);
        bool pers_ok = true;
        float prev = 1.1f;
        for (float f : rep.fractions) {
            pers_ok = pers_ok && f >= 0.0f && f <= 1.0f && f <= prev;
            prev = f;
        }
        c.check("harness.persistence_fractions", pers_ok);
    }

    out << (c.ok ? "verify: all checks passed\n" : "verify: FAILURES detected\n");
    return c.ok;
}

}  // namespace minikv
