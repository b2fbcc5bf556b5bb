#include "minikv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "minikv/accounting.hpp"

namespace minikv {

using nlohmann::json;

void RunConfig::validate() const {
    if (layers < 1 || d < 1 || l_prompt < 1) {
        throw std::invalid_argument("RunConfig: layers, d, l_prompt must be >= 1");
    }
    if (n_heads < 1 || d % n_heads != 0) {
        throw std::invalid_argument("RunConfig: d must be a positive multiple of n_heads");
    }
    if (group_size < 1 || n_r == 0 || n_r % group_size != 0) {
        throw std::invalid_argument("RunConfig: n_r must be a positive multiple of group_size");
    }
    if (budget.alpha_hh < 0 || budget.alpha_rw < 0 || budget.alpha_hh + budget.alpha_rw > 1.0) {
        throw std::invalid_argument("RunConfig: budget fractions must be in [0,1] with sum <= 1");
    }
    if (tiles.block_m < 1 || tiles.block_n < 1) {
        throw std::invalid_argument("RunConfig: tile sizes must be >= 1");
    }
    if (pyramid_depth < 1) {
        throw std::invalid_argument("RunConfig: pyramid depth must be >= 1");
    }
}

namespace {

Matrix col_slice(const Matrix& m, std::size_t c0, std::size_t width) {
    Matrix out(m.rows, width);
    for (std::size_t r = 0; r < m.rows; ++r) {
        std::copy_n(m.row(r) + c0, width, out.row(r));
    }
    return out;
}

float max_abs(const Matrix& m) {
    float v = 0.0f;
    for (float x : m.data) {
        v = std::max(v, std::abs(x));
    }
    return v;
}

float max_group_halfscale(const QuantizedTensor& t) {
    float v = 0.0f;
    for (const auto& p : t.params) {
        v = std::max(v, p.scale * 0.5f);
    }
    return v;
}

}  // namespace

RunTrace run_model(const ToyModel& model, const Matrix& prompt, const RunConfig& config) {
    config.validate();
    if (model.layers != config.layers || model.d != config.d ||
        model.n_heads != config.n_heads) {
        throw std::invalid_argument("run_model: model/config dimension mismatch");
    }
    if (prompt.rows != config.l_prompt || prompt.cols != config.d) {
        throw std::invalid_argument("run_model: prompt shape mismatch");
    }
    const std::size_t layers = config.layers;
    const std::size_t heads = config.n_heads;
    const std::size_t dh = model.d_head();
    const float scale = default_scale(dh);

    RunTrace trace;
    trace.config = config;

    // Prefill forward pass: attention for every layer/head first, so variance
    // policies can see all layers before budgets are fixed.
    std::vector<std::vector<Matrix>> k_heads(layers), v_heads(layers), q_heads(layers);
    std::vector<std::vector<Vector>> a_cumul(layers);
    Vector layer_vars(layers);
    Matrix x = prompt;
    for (std::size_t h = 0; h < layers; ++h) {
        const Matrix q_full = matmul(x, model.w_q[h]);
        const Matrix k_full = matmul(x, model.w_k[h]);
        const Matrix v_full = matmul(x, model.w_v[h]);
        Matrix x_out(prompt.rows, config.d);
        double var_sum = 0.0;
        for (std::size_t i = 0; i < heads; ++i) {
            Matrix qh = col_slice(q_full, i * dh, dh);
            Matrix kh = col_slice(k_full, i * dh, dh);
            Matrix vh = col_slice(v_full, i * dh, dh);
            AttentionResult res = selective_flash_attn(qh, kh, vh, scale, true, config.tiles);
            for (std::size_t r = 0; r < prompt.rows; ++r) {
                std::copy_n(res.output.row(r), dh, x_out.row(r) + i * dh);
            }
            var_sum += layer_score_variance(res.a_cumul);
            a_cumul[h].push_back(std::move(res.a_cumul));
            q_heads[h].push_back(std::move(qh));
            k_heads[h].push_back(std::move(kh));
            v_heads[h].push_back(std::move(vh));
        }
        layer_vars[h] = static_cast<float>(var_sum / static_cast<double>(heads));
        Vector avg(prompt.rows, 0.0f);
        for (const Vector& ac : a_cumul[h]) {
            for (std::size_t j = 0; j < avg.size(); ++j) {
                avg[j] += ac[j] / static_cast<float>(heads);
            }
        }
        trace.per_layer_a_cumul.push_back(std::move(avg));
        x = std::move(x_out);
    }

    // Budgets: per-layer heavy-hitter counts plus a fixed recent window.
    const auto mean_hh = static_cast<std::size_t>(
        std::floor(config.budget.alpha_hh * static_cast<double>(config.l_prompt)));
    const auto rw_count = static_cast<std::size_t>(
        std::floor(config.budget.alpha_rw * static_cast<double>(config.l_prompt)));
    LayerAllocation alloc;
    switch (config.policy) {
        case AllocPolicy::Uniform:
            alloc = allocate_uniform(mean_hh * layers, layers);
            break;
        case AllocPolicy::Pyramid:
            alloc = allocate_pyramid(mean_hh, layers, config.pyramid_depth,
                                     config.pyramid_orientation);
            break;
        case AllocPolicy::VarProp:
            alloc = allocate_variance(layer_vars, mean_hh * layers, VarianceMode::Prop);
            break;
        case AllocPolicy::VarInv:
            alloc = allocate_variance(layer_vars, mean_hh * layers, VarianceMode::Inv);
            break;
    }

    std::vector<KVCacheLayer> caches(layers * heads);
    std::vector<Matrix> ref_keys(layers * heads), ref_values(layers * heads);
    double dev_bound = 0.0;
    for (std::size_t h = 0; h < layers; ++h) {
        LayerTraceEntry entry;
        entry.layer = h;
        for (std::size_t i = 0; i < heads; ++i) {
            auto [cache, report] =
                prefill(k_heads[h][i], v_heads[h][i], a_cumul[h][i], alloc.per_layer_hh[h],
                        rw_count, config.n_r, config.group_size, config.mode);
            entry.kept_tokens += report.kept.kept.size();
            entry.hh_tokens += report.kept.hh.size();
            entry.rw_tokens += report.kept.rw.size();
            entry.bytes_before += report.bytes_before;
            entry.bytes_after += report.bytes_after;
            caches[h * heads + i] = std::move(cache);
            ref_keys[h * heads + i] = k_heads[h][i];
            ref_values[h * heads + i] = v_heads[h][i];
        }
        trace.layers.push_back(entry);
        trace.total_bytes_before += entry.bytes_before;
        trace.total_bytes_after += entry.bytes_after;
    }

    // Decode: the compressed pipeline and the full-precision keep-all reference
    // evolve independently from shared per-step input tokens.
    Rng decode_rng = Rng(config.seed).stream(0xD0);
    for (std::size_t s = 0; s < config.steps; ++s) {
        Vector token(config.d);
        for (float& v : token) {
            v = decode_rng.next_gaussian();
        }
        Vector xc = token;
        Vector xr = token;
        double step_dev = 0.0;
        for (std::size_t h = 0; h < layers; ++h) {
            const Vector qc = vecmat(xc, model.w_q[h]);
            const Vector kc = vecmat(xc, model.w_k[h]);
            const Vector vc = vecmat(xc, model.w_v[h]);
            const Vector qr = vecmat(xr, model.w_q[h]);
            const Vector kr = vecmat(xr, model.w_k[h]);
            const Vector vr = vecmat(xr, model.w_v[h]);
            Vector out_c(config.d), out_r(config.d);
            for (std::size_t i = 0; i < heads; ++i) {
                KVCacheLayer& cache = caches[h * heads + i];
                const Vector tq(qc.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                qc.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                const Vector tk(kc.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                kc.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                const Vector tv(vc.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                vc.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                const Vector to = decode_step(cache, tq, tk, tv, scale);
                std::copy(to.begin(), to.end(), out_c.begin() + static_cast<std::ptrdiff_t>(i * dh));

                Matrix& rk = ref_keys[h * heads + i];
                Matrix& rv = ref_values[h * heads + i];
                const Vector rtq(qr.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                 qr.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                const Vector rtk(kr.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                 kr.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                const Vector rtv(vr.begin() + static_cast<std::ptrdiff_t>(i * dh),
                                 vr.begin() + static_cast<std::ptrdiff_t>((i + 1) * dh));
                append_row(rk, rtk);
                append_row(rv, rtv);
                auto [ro, rattn] = decode_attention(rtq, rk, rv, scale);
                std::copy(ro.begin(), ro.end(), out_r.begin() + static_cast<std::ptrdiff_t>(i * dh));

                if (cache.mode == QuantMode::TwoBit) {
                    // First-order bound: score shift from key error through the
                    // softmax (l1 sensitivity <= 2) times the value range, plus
                    // the direct value error.
                    float l1q = 0.0f;
                    for (float qv : tq) {
                        l1q += std::abs(qv);
                    }
                    const float dk = max_group_halfscale(cache.q_key);
                    const float dv = max_group_halfscale(cache.q_value);
                    const float vmax = std::max(max_abs(stored_values(cache)), max_abs(cache.r_value));
                    dev_bound = std::max(dev_bound,
                                         static_cast<double>(2.0f * scale * l1q * dk * vmax + dv));
                }
                for (std::size_t c = 0; c < dh; ++c) {
                    step_dev = std::max(step_dev, static_cast<double>(std::abs(
                                                      to[c] - ro[c])));
                }
            }
            xc = out_c;
            xr = out_r;
        }
        trace.decode.push_back({s, step_dev});
        trace.max_abs_dev = std::max(trace.max_abs_dev, step_dev);
    }
    trace.analytic_dev_bound = dev_bound;
    return trace;
}

RunTrace run_from_config(const RunConfig& config) {
    config.validate();
    const ToyModel model =
        ToyModel::seeded(config.seed, config.layers, config.d, config.n_heads);
    const Matrix prompt = gen_workload(config.seed, config.l_prompt, config.d, config.dist);
    return run_model(model, prompt, config);
}

namespace {

std::string policy_name(AllocPolicy p) {
    switch (p) {
        case AllocPolicy::Uniform: return "uniform";
        case AllocPolicy::Pyramid: return "pyramid";
        case AllocPolicy::VarProp: return "var-prop";
        case AllocPolicy::VarInv: return "var-inv";
    }
    return "?";
}

AllocPolicy policy_from_name(const std::string& s) {
    if (s == "uniform") return AllocPolicy::Uniform;
    if (s == "pyramid") return AllocPolicy::Pyramid;
    if (s == "var-prop") return AllocPolicy::VarProp;
    if (s == "var-inv") return AllocPolicy::VarInv;
    throw std::runtime_error("unknown allocation policy: " + s);
}

}  // namespace

std::string trace_to_json(const RunTrace& trace) {
    const RunConfig& c = trace.config;
    json meta = {
        {"seed", c.seed},
        {"version", "0.1.0"},
        {"rng", Rng::kName},
        {"dims",
         {{"layers", c.layers},
          {"d", c.d},
          {"n_heads", c.n_heads},
          {"l_prompt", c.l_prompt},
          {"steps", c.steps}}},
        {"budget", {{"alpha_hh", c.budget.alpha_hh}, {"alpha_rw", c.budget.alpha_rw}}},
        {"policy", policy_name(c.policy)},
        {"pyramid_depth", c.pyramid_depth},
        {"n_r", c.n_r},
        {"group_size", c.group_size},
        {"tiles", {c.tiles.block_m, c.tiles.block_n}},
        {"distribution", c.dist == Distribution::Gaussian ? "gaussian" : "powerlaw"},
        {"quant_mode", c.mode == QuantMode::TwoBit ? "2bit" : "identity"},
    };
    json layers = json::array();
    for (const auto& e : trace.layers) {
        layers.push_back({{"layer", e.layer},
                          {"kept_tokens", e.kept_tokens},
                          {"hh", e.hh_tokens},
                          {"rw", e.rw_tokens},
                          {"bytes_before", e.bytes_before},
                          {"bytes_after", e.bytes_after}});
    }
    json decode = json::array();
    for (const auto& e : trace.decode) {
        decode.push_back({{"step", e.step}, {"max_abs_dev", e.max_abs_dev}});
    }
    json doc = {{"meta", meta},
                {"layers", layers},
                {"decode", decode},
                {"totals",
                 {{"bytes_before", trace.total_bytes_before},
                  {"bytes_after", trace.total_bytes_after},
                  {"max_abs_dev", trace.max_abs_dev},
                  {"analytic_dev_bound", trace.analytic_dev_bound}}}};
    return doc.dump(2) + "\n";
}

std::string trace_metrics_csv(const RunTrace& trace) {
    std::ostringstream os;
    os << "record,index,kept_tokens,hh,rw,bytes_before,bytes_after,max_abs_dev\n";
    for (const auto& e : trace.layers) {
        os << "layer," << e.layer << ',' << e.kept_tokens << ',' << e.hh_tokens << ','
           << e.rw_tokens << ',' << e.bytes_before << ',' << e.bytes_after << ",\n";
    }
    for (const auto& e : trace.decode) {
        os << "decode," << e.step << ",,,,,," << e.max_abs_dev << "\n";
    }
    return os.str();
}

RunConfig parse_run_config_json(const std::string& text) {
    json doc = json::parse(text);
    static const std::vector<std::string> known = {
        "seed",        "layers",     "d",           "n_heads",
        "l_prompt",    "steps",      "budget",      "policy",
        "pyramid_depth", "pyramid_orientation",     "n_r",
        "group_size",  "tiles",      "distribution", "quant_mode"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::runtime_error("unknown config key: " + key);
        }
    }
    RunConfig c;
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("layers")) c.layers = doc["layers"].get<std::size_t>();
    if (doc.contains("d")) c.d = doc["d"].get<std::size_t>();
    if (doc.contains("n_heads")) c.n_heads = doc["n_heads"].get<std::size_t>();
    if (doc.contains("l_prompt")) c.l_prompt = doc["l_prompt"].get<std::size_t>();
    if (doc.contains("steps")) c.steps = doc["steps"].get<std::size_t>();
    if (doc.contains("budget")) {
        const json& b = doc["budget"];
        if (b.is_array()) {
            c.budget.alpha_hh = b.at(0).get<double>();
            c.budget.alpha_rw = b.at(1).get<double>();
        } else {
            c.budget.alpha_hh = b.at("alpha_hh").get<double>();
            c.budget.alpha_rw = b.at("alpha_rw").get<double>();
        }
    }
    if (doc.contains("policy")) c.policy = policy_from_name(doc["policy"].get<std::string>());
    if (doc.contains("pyramid_depth")) c.pyramid_depth = doc["pyramid_depth"].get<std::size_t>();
    if (doc.contains("pyramid_orientation")) {
        const std::string o = doc["pyramid_orientation"].get<std::string>();
        if (o == "bottom-heavy") {
            c.pyramid_orientation = PyramidOrientation::BottomHeavy;
        } else if (o == "top-heavy") {
            c.pyramid_orientation = PyramidOrientation::TopHeavy;
        } else {
            throw std::runtime_error("unknown pyramid orientation: " + o);
        }
    }
    if (doc.contains("n_r")) c.n_r = doc["n_r"].get<std::size_t>();
    if (doc.contains("group_size")) c.group_size = doc["group_size"].get<std::size_t>();
    if (doc.contains("tiles")) {
        c.tiles.block_m = doc["tiles"].at(0).get<std::size_t>();
        c.tiles.block_n = doc["tiles"].at(1).get<std::size_t>();
    }
    if (doc.contains("distribution")) {
        const std::string d = doc["distribution"].get<std::string>();
        if (d == "gaussian") {
            c.dist = Distribution::Gaussian;
        } else if (d == "powerlaw") {
            c.dist = Distribution::PowerLawAttention;
        } else {
            throw std::runtime_error("unknown distribution: " + d);
        }
    }
    if (doc.contains("quant_mode")) {
        const std::string m = doc["quant_mode"].get<std::string>();
        if (m == "2bit") {
            c.mode = QuantMode::TwoBit;
        } else if (m == "identity") {
            c.mode = QuantMode::Identity;
        } else {
            throw std::runtime_error("unknown quant mode: " + m);
        }
    }
    c.validate();
    return c;
}

}  // namespace minikv
