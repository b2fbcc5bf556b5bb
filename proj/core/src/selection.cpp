#include "minikv/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace minikv {

SelectionResult select_token_counts(const Vector& a_cumul, std::size_t hh_count,
                                    std::size_t rw_count) {
    const std::size_t l = a_cumul.size();
    SelectionResult res;
    if (hh_count + rw_count >= l) {
        res.clamped = hh_count + rw_count > l;
        rw_count = std::min(rw_count, l);
        hh_count = l - rw_count;
    }
    for (std::size_t i = l - rw_count; i < l; ++i) {
        res.rw.push_back(i);
    }
    const std::size_t pool = l - rw_count;  // hh candidates: non-RW positions
    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return a_cumul[a] > a_cumul[b];  // ties keep the lower index first
    });
    res.hh.assign(order.begin(), order.begin() + std::min(hh_count, pool));
    std::sort(res.hh.begin(), res.hh.end());
    res.kept = res.hh;
    res.kept.insert(res.kept.end(), res.rw.begin(), res.rw.end());
    return res;
}

SelectionResult select_tokens(const Vector& a_cumul, const CacheBudget& budget,
                              std::size_t l_prompt) {
    if (a_cumul.size() != l_prompt) {
        throw std::invalid_argument("select_tokens: a_cumul length != l_prompt");
    }
    if (budget.alpha_hh < 0 || budget.alpha_rw < 0) {
        throw std::invalid_argument("select_tokens: negative budget");
    }
    const auto hh = static_cast<std::size_t>(std::floor(budget.alpha_hh * static_cast<double>(l_prompt)));
    const auto rw = static_cast<std::size_t>(std::floor(budget.alpha_rw * static_cast<double>(l_prompt)));
    return select_token_counts(a_cumul, hh, rw);
}

LayerAllocation allocate_uniform(std::size_t total_hh, std::size_t layers) {
    if (layers < 1) {
        throw std::invalid_argument("allocate_uniform: layers must be >= 1");
    }
    LayerAllocation alloc;
    alloc.per_layer_hh.assign(layers, total_hh / layers);
    const std::size_t rem = total_hh % layers;
    for (std::size_t i = 0; i < rem; ++i) {
        ++alloc.per_layer_hh[i];  // remainder goes to the lowest layers
    }
    return alloc;
}

LayerAllocation allocate_pyramid(std::size_t mean_budget_x, std::size_t layers,
                                 std::size_t depth_d, PyramidOrientation orientation) {
    if (layers < 1) {
        throw std::invalid_argument("allocate_pyramid: layers must be >= 1");
    }
    if (depth_d < 1) {
        throw std::invalid_argument("allocate_pyramid: depth must be >= 1");
    }
    const double x = static_cast<double>(mean_budget_x);
    const double small_end = x / static_cast<double>(depth_d);
    const double large_end = 2.0 * x - small_end;
    const double first = (orientation == PyramidOrientation::BottomHeavy) ? large_end : small_end;
    const double last = (orientation == PyramidOrientation::BottomHeavy) ? small_end : large_end;
    LayerAllocation alloc;
    alloc.per_layer_hh.resize(layers);
    for (std::size_t i = 0; i < layers; ++i) {
        const double t = (layers == 1) ? 0.0
                                       : static_cast<double>(i) / static_cast<double>(layers - 1);
        const double v = first + (last - first) * t;
        alloc.per_layer_hh[i] = static_cast<std::size_t>(std::llround(std::max(v, 0.0)));
    }
    return alloc;
}

LayerAllocation allocate_variance(const Vector& per_layer_variance, std::size_t total_hh,
                                  VarianceMode mode) {
    const std::size_t layers = per_layer_variance.size();
    if (layers < 1) {
        throw std::invalid_argument("allocate_variance: no layers");
    }
    constexpr double kEps = 1e-6;
    std::vector<double> shares(layers);
    double sum = 0.0;
    bool all_zero = true;
    for (std::size_t i = 0; i < layers; ++i) {
        if (per_layer_variance[i] < 0) {
            throw std::invalid_argument("allocate_variance: negative variance");
        }
        if (per_layer_variance[i] > 0) {
            all_zero = false;
        }
        shares[i] = (mode == VarianceMode::Prop)
                        ? static_cast<double>(per_layer_variance[i])
                        : 1.0 / (static_cast<double>(per_layer_variance[i]) + kEps);
        sum += shares[i];
    }
    if (all_zero && mode == VarianceMode::Prop) {
        LayerAllocation alloc = allocate_uniform(total_hh, layers);
        alloc.uniform_fallback = true;
        return alloc;
    }
    // largest-remainder rounding; remainder ties go to the lower layer
    LayerAllocation alloc;
    alloc.per_layer_hh.resize(layers);
    std::vector<std::pair<double, std::size_t>> fracs(layers);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < layers; ++i) {
        const double target = static_cast<double>(total_hh) * shares[i] / sum;
        alloc.per_layer_hh[i] = static_cast<std::size_t>(std::floor(target));
        assigned += alloc.per_layer_hh[i];
        fracs[i] = {target - std::floor(target), i};
    }
    std::stable_sort(fracs.begin(), fracs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total_hh; ++r, ++assigned) {
        ++alloc.per_layer_hh[fracs[r % layers].second];
    }
    return alloc;
}

float layer_score_variance(const Vector& a_cumul) {
    if (a_cumul.empty()) {
        throw std::invalid_argument("layer_score_variance: empty input");
    }
    double mean = 0.0;
    for (float v : a_cumul) {
        mean += v;
    }
    mean /= static_cast<double>(a_cumul.size());
    double var = 0.0;
    for (float v : a_cumul) {
        const double d = v - mean;
        var += d * d;
    }
    return static_cast<float>(var / static_cast<double>(a_cumul.size()));
}

}  // namespace minikv
