#include "minikv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "minikv/attention.hpp"

namespace minikv {

Matrix gen_workload(std::uint64_t seed, std::size_t l_prompt, std::size_t d, Distribution dist) {
    if (l_prompt < 1 || d < 1) {
        throw std::invalid_argument("gen_workload: dims must be >= 1");
    }
    Rng rng = Rng(seed).stream(0xA0);
    Matrix x(l_prompt, d);
    if (dist == Distribution::Gaussian) {
        for (float& v : x.data) {
            v = rng.next_gaussian();
        }
        return x;
    }
    // Shared unit direction with Pareto-distributed per-token magnitudes plus
    // a small Gaussian perturbation.
    Vector dir(d);
    float norm = 0.0f;
    for (float& v : dir) {
        v = rng.next_gaussian();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (float& v : dir) {
        v /= norm;
    }
    Rng mag_rng = Rng(seed).stream(0xA1);
    for (std::size_t i = 0; i < l_prompt; ++i) {
        const float u = std::max(mag_rng.next_uniform(), 1e-6f);
        const float c = std::min(std::pow(u, -1.0f / 1.2f), 50.0f);  // Pareto, alpha = 1.2
        for (std::size_t j = 0; j < d; ++j) {
            x.at(i, j) = c * dir[j] + 0.3f * rng.next_gaussian();
        }
    }
    return x;
}

ToyModel ToyModel::seeded(std::uint64_t seed, std::size_t layers, std::size_t d,
                          std::size_t n_heads) {
    if (layers < 1 || d < 1 || n_heads < 1 || d % n_heads != 0) {
        throw std::invalid_argument("ToyModel: d must be a positive multiple of n_heads");
    }
    ToyModel model;
    model.layers = layers;
    model.d = d;
    model.n_heads = n_heads;
    const float std_dev = 1.0f / std::sqrt(static_cast<float>(d));
    Rng base(seed);
    for (std::size_t h = 0; h < layers; ++h) {
        Rng wr = base.stream(0xB0 + 3 * h);
        Rng wk = base.stream(0xB1 + 3 * h);
        Rng wv = base.stream(0xB2 + 3 * h);
        Matrix q(d, d), k(d, d), v(d, d);
        for (float& x : q.data) x = std_dev * wr.next_gaussian();
        for (float& x : k.data) x = std_dev * wk.next_gaussian();
        for (float& x : v.data) x = std_dev * wv.next_gaussian();
        model.w_q.push_back(std::move(q));
        model.w_k.push_back(std::move(k));
        model.w_v.push_back(std::move(v));
    }
    return model;
}

namespace {

struct H2OState {
    std::vector<std::size_t> indices;  // original token positions, ascending
    Matrix keys;
    std::vector<double> scores;
};

// Evict the lowest-scoring token outside the rw_budget most recent positions
// until within budget. Ties go to the lower index.
void evict_to_budget(H2OState& st, std::size_t total_budget, std::size_t rw_budget) {
    while (st.indices.size() > total_budget) {
        const std::size_t protect_from =
            st.indices.size() > rw_budget ? st.indices.size() - rw_budget : 0;
        std::size_t victim = st.indices.size();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < protect_from; ++i) {
            if (st.scores[i] < best) {
                best = st.scores[i];
                victim = i;
            }
        }
        if (victim == st.indices.size()) {
            break;  // everything is inside the recent window
        }
        st.indices.erase(st.indices.begin() + static_cast<std::ptrdiff_t>(victim));
        st.scores.erase(st.scores.begin() + static_cast<std::ptrdiff_t>(victim));
        st.keys.data.erase(st.keys.data.begin() + static_cast<std::ptrdiff_t>(victim * st.keys.cols),
                           st.keys.data.begin() + static_cast<std::ptrdiff_t>((victim + 1) * st.keys.cols));
        --st.keys.rows;
    }
}

}  // namespace

H2OBaselineTrace h2o_dynamic_baseline(const Matrix& prompt_k, const Vector& prompt_scores,
                                      const std::vector<Vector>& decode_qs,
                                      const std::vector<Vector>& decode_ks,
                                      std::size_t hh_budget, std::size_t rw_budget, float scale) {
    if (prompt_k.rows != prompt_scores.size()) {
        throw std::invalid_argument("h2o_dynamic_baseline: prompt score length mismatch");
    }
    if (decode_qs.size() != decode_ks.size()) {
        throw std::invalid_argument("h2o_dynamic_baseline: decode stream length mismatch");
    }
    if (hh_budget + rw_budget < 1) {
        throw std::invalid_argument("h2o_dynamic_baseline: budget must be >= 1");
    }
    const std::size_t total_budget = hh_budget + rw_budget;
    H2OState st;
    st.indices.resize(prompt_k.rows);
    for (std::size_t i = 0; i < prompt_k.rows; ++i) {
        st.indices[i] = i;
    }
    st.keys = prompt_k;
    st.scores.assign(prompt_scores.begin(), prompt_scores.end());
    evict_to_budget(st, total_budget, rw_budget);

    H2OBaselineTrace trace;
    trace.kept_per_step.push_back(st.indices);
    for (std::size_t s = 0; s < decode_qs.size(); ++s) {
        append_row(st.keys, decode_ks[s]);
        st.indices.push_back(prompt_k.rows + s);
        st.scores.push_back(0.0);
        Vector attn(st.keys.rows);
        for (std::size_t j = 0; j < st.keys.rows; ++j) {
            attn[j] = scale * dot(decode_qs[s].data(), st.keys.row(j), st.keys.cols);
        }
        softmax_inplace(attn.data(), attn.size());
        for (std::size_t j = 0; j < attn.size(); ++j) {
            st.scores[j] += attn[j];
        }
        evict_to_budget(st, total_budget, rw_budget);
        trace.kept_per_step.push_back(st.indices);
    }
    return trace;
}

PersistenceReport persistence_analysis(const H2OBaselineTrace& trace,
                                       const std::vector<std::size_t>& prefill_hh) {
    if (prefill_hh.empty()) {
        throw std::runtime_error("persistence_analysis: empty prefill heavy-hitter set");
    }
    PersistenceReport report;
    for (const auto& kept : trace.kept_per_step) {
        std::size_t hit = 0;
        for (std::size_t idx : prefill_hh) {
            if (std::binary_search(kept.begin(), kept.end(), idx)) {
                ++hit;
            }
        }
        report.fractions.push_back(static_cast<float>(hit) /
                                   static_cast<float>(prefill_hh.size()));
    }
    report.final_fraction = report.fractions.back();
    return report;
}

}  // namespace minikv
