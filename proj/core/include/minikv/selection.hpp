#pragma once

#include <cstddef>
#include <vector>

#include "minikv/matrix.hpp"

namespace minikv {

// Fractions of the prompt retained as heavy hitters and recent window.
struct CacheBudget {
    double alpha_hh = 0.0;
    double alpha_rw = 0.0;
};

struct LayerAllocation {
    std::vector<std::size_t> per_layer_hh;
    bool uniform_fallback = false;  // set when variance allocation degenerated
};

struct SelectionResult {
    std::vector<std::size_t> kept;  // sorted ascending, hh union rw
    std::vector<std::size_t> hh;
    std::vector<std::size_t> rw;    // always the trailing positions
    bool clamped = false;           // budgets exceeded the prompt; kept everything
};

// rw = last floor(alpha_rw * l) positions; hh = top floor(alpha_hh * l) positions
// by a_cumul among the remainder, ties broken toward the lower index.
SelectionResult select_tokens(const Vector& a_cumul, const CacheBudget& budget,
                              std::size_t l_prompt);

// Same policy with explicit counts.
SelectionResult select_token_counts(const Vector& a_cumul, std::size_t hh_count,
                                    std::size_t rw_count);

LayerAllocation allocate_uniform(std::size_t total_hh, std::size_t layers);

// Endpoint orientation for the pyramid. BottomHeavy gives layer 0 the larger
// budget (2x - x/d); TopHeavy is the mirrored reading.
enum class PyramidOrientation { BottomHeavy, TopHeavy };

// Linear interpolation between x/d and 2x - x/d across layers; d = 1 degenerates
// to a uniform allocation of x per layer. Default depth is 7.
LayerAllocation allocate_pyramid(std::size_t mean_budget_x, std::size_t layers,
                                 std::size_t depth_d = 7,
                                 PyramidOrientation orientation = PyramidOrientation::BottomHeavy);

enum class VarianceMode { Prop, Inv };

// Shares proportional (Prop) or inversely proportional (Inv, eps = 1e-6) to the
// per-layer variances, scaled to sum to total_hh with largest-remainder rounding.
LayerAllocation allocate_variance(const Vector& per_layer_variance, std::size_t total_hh,
                                  VarianceMode mode);

// Population variance.
float layer_score_variance(const Vector& a_cumul);

}  // namespace minikv
