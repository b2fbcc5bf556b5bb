#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minikv/attention.hpp"
#include "minikv/cache_engine.hpp"
#include "minikv/harness.hpp"
#include "minikv/selection.hpp"

namespace minikv {

enum class AllocPolicy { Uniform, Pyramid, VarProp, VarInv };

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t layers = 4;
    std::size_t d = 64;
    std::size_t n_heads = 1;
    std::size_t l_prompt = 256;
    std::size_t steps = 32;
    CacheBudget budget{0.25, 0.25};
    AllocPolicy policy = AllocPolicy::Uniform;
    std::size_t pyramid_depth = 7;
    PyramidOrientation pyramid_orientation = PyramidOrientation::BottomHeavy;
    std::size_t n_r = 128;
    std::size_t group_size = 16;
    TileConfig tiles{64, 64};
    Distribution dist = Distribution::Gaussian;
    QuantMode mode = QuantMode::TwoBit;

    void validate() const;
};

struct LayerTraceEntry {
    std::size_t layer = 0;
    std::size_t kept_tokens = 0;  // summed over heads
    std::size_t hh_tokens = 0;
    std::size_t rw_tokens = 0;
    std::uint64_t bytes_before = 0;
    std::uint64_t bytes_after = 0;
};

struct DecodeTraceEntry {
    std::size_t step = 0;
    // Max |t_o - t_o*| across layers vs. the full-precision pipeline run side by side.
    double max_abs_dev = 0.0;
};

struct RunTrace {
    RunConfig config;
    std::vector<LayerTraceEntry> layers;
    std::vector<DecodeTraceEntry> decode;
    std::vector<Vector> per_layer_a_cumul;  // head-averaged, used by variance policies
    std::uint64_t total_bytes_before = 0;
    std::uint64_t total_bytes_after = 0;
    double max_abs_dev = 0.0;
    // First-order propagation of per-group scale/2 through one score matmul and
    // softmax; the measured deviation is checked loosely against this.
    double analytic_dev_bound = 0.0;
};

// Full multi-layer pipeline: prefill attention + selection + quantization per
// layer, then `steps` decode iterations feeding each layer's output forward.
// A full-precision keep-all pipeline runs side by side for deviation reporting.
RunTrace run_model(const ToyModel& model, const Matrix& prompt, const RunConfig& config);

// Convenience wrapper: seeds the model and workload from the config and runs.
RunTrace run_from_config(const RunConfig& config);

std::string trace_to_json(const RunTrace& trace);
std::string trace_metrics_csv(const RunTrace& trace);

// Parses a JSON config document. Unknown keys are rejected.
RunConfig parse_run_config_json(const std::string& text);

}  // namespace minikv
