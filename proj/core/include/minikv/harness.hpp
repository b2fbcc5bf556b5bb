#pragma once

#include <cstdint>
#include <vector>

#include "minikv/matrix.hpp"
#include "minikv/rng.hpp"

namespace minikv {

enum class Distribution {
    Gaussian,
    // A few tokens share a dominant direction with power-law magnitudes, so the
    // resulting cumulative attention is heavy-tailed.
    PowerLawAttention,
};

Matrix gen_workload(std::uint64_t seed, std::size_t l_prompt, std::size_t d, Distribution dist);

// Single-head-by-default toy transformer: per-layer d x d projection weights,
// no MLP / norm / positional encodings.
struct ToyModel {
    std::size_t layers = 0;
    std::size_t d = 0;
    std::size_t n_heads = 1;
    std::vector<Matrix> w_q, w_k, w_v;

    std::size_t d_head() const { return d / n_heads; }
    static ToyModel seeded(std::uint64_t seed, std::size_t layers, std::size_t d,
                           std::size_t n_heads = 1);
};

// Step-wise greedy H2O policy: running cumulative attention scores; after each
// decode step evict the lowest-scoring non-recent-window token while over budget.
struct H2OBaselineTrace {
    // kept_per_step[0] is the post-prefill set; one entry per decode step follows.
    std::vector<std::vector<std::size_t>> kept_per_step;
};

H2OBaselineTrace h2o_dynamic_baseline(const Matrix& prompt_k, const Vector& prompt_scores,
                                      const std::vector<Vector>& decode_qs,
                                      const std::vector<Vector>& decode_ks,
                                      std::size_t hh_budget, std::size_t rw_budget, float scale);

struct PersistenceReport {
    Vector fractions;  // one per trace entry, each in [0,1]
    double final_fraction = 0.0;
};

// Fraction of prefill-selected heavy hitters still retained at each step.
PersistenceReport persistence_analysis(const H2OBaselineTrace& trace,
                                       const std::vector<std::size_t>& prefill_hh);

}  // namespace minikv
