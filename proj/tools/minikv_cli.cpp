#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minikv/accounting.hpp"
#include "minikv/harness.hpp"
#include "minikv/pipeline.hpp"
#include "minikv/snapshot.hpp"
#include "minikv/verify.hpp"

namespace {

using namespace minikv;

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;

// Two significant figures, truncated (0.3355 -> 0.33, 2.4159 -> 2.4).
std::string gb_2sig(double gb) {
    if (gb <= 0.0) {
        return "0";
    }
    const int exponent = static_cast<int>(std::floor(std::log10(gb)));
    const int decimals = std::max(0, 1 - exponent);
    const double factor = std::pow(10.0, decimals);
    std::ostringstream os;
    os.precision(decimals);
    os << std::fixed << std::floor(gb * factor) / factor;
    return os.str();
}

CacheBudget parse_budget(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw std::runtime_error("budget must be of the form alpha_hh,alpha_rw");
    }
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

RunConfig load_config(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + config_path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config_json(buf.str());
}

int cmd_mem(const ModelDims& m, const WorkloadDims& w, const CacheBudget& budget,
            double snapkv_p, const std::string& json_out, const std::string& csv_out) {
    const CompressionReport report = compression_report(m, w, budget, snapkv_p);
    std::cout << "method      bytes           GB      reduction_vs_full\n";
    for (const auto& row : report.rows) {
        std::ostringstream line;
        line << method_name(row.method);
        while (line.str().size() < 12) {
            line << ' ';
        }
        std::cout << line.str() << row.bytes << "  \t" << gb_2sig(row.gb) << " GB\t"
                  << std::llround(row.reduction_pct) << "%\n";
    }
    std::cout << "qhitter_factor: " << qhitter_factor(m) << "\n";
    std::cout << "h2o_parity_alpha: " << report.h2o_parity_alpha << "\n";
    std::cout << "qhitter_parity_alpha: " << report.qhitter_parity_alpha << "\n";
    if (!json_out.empty() || !csv_out.empty()) {
        std::ostringstream json, csv;
        json << "[";
        csv << "method,bytes,gb,reduction_pct\n";
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            const auto& row = report.rows[i];
            json << (i ? "," : "") << "{\"method\":\"" << method_name(row.method)
                 << "\",\"bytes\":" << row.bytes << ",\"gb\":" << row.gb
                 << ",\"reduction_pct\":" << row.reduction_pct << "}";
            csv << method_name(row.method) << ',' << row.bytes << ',' << row.gb << ','
                << row.reduction_pct << "\n";
        }
        json << "]\n";
        if (!json_out.empty()) {
            std::ofstream(json_out) << json.str();
        }
        if (!csv_out.empty()) {
            std::ofstream(csv_out) << csv.str();
        }
    }
    return kExitOk;
}

int cmd_run(const RunConfig& config, const std::string& out_path, const std::string& csv_path) {
    const RunTrace trace = run_from_config(config);
    const std::string json = trace_to_json(trace);
    if (out_path.empty()) {
        std::cout << json;
    } else {
        std::ofstream(out_path) << json;
        std::cout << "trace written to " << out_path << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream(csv_path) << trace_metrics_csv(trace);
        std::cout << "metrics written to " << csv_path << "\n";
    }
    std::cout << "total bytes: " << trace.total_bytes_after << " (was "
              << trace.total_bytes_before << "), max_abs_dev: " << trace.max_abs_dev << "\n";
    return kExitOk;
}

int cmd_allocate(const std::string& policy, std::size_t layers, std::size_t total,
                 std::size_t mean_x, std::size_t depth, const std::string& variances_csv) {
    LayerAllocation alloc;
    if (policy == "uniform") {
        alloc = allocate_uniform(total, layers);
    } else if (policy == "pyramid") {
        alloc = allocate_pyramid(mean_x, layers, depth);
    } else if (policy == "var-prop" || policy == "var-inv") {
        Vector vars;
        std::stringstream ss(variances_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            vars.push_back(std::stof(item));
        }
        if (vars.size() != layers) {
            throw std::runtime_error("--variances must list one value per layer");
        }
        alloc = allocate_variance(vars, total,
                                  policy == "var-prop" ? VarianceMode::Prop : VarianceMode::Inv);
    } else {
        throw std::runtime_error("unknown policy: " + policy);
    }
    std::size_t sum = 0;
    for (std::size_t i = 0; i < alloc.per_layer_hh.size(); ++i) {
        std::cout << "layer " << i << ": " << alloc.per_layer_hh[i] << "\n";
        sum += alloc.per_layer_hh[i];
    }
    std::cout << "total: " << sum << (alloc.uniform_fallback ? " (uniform fallback)" : "")
              << "\n";
    return kExitOk;
}

int cmd_persistence(std::uint64_t seed, std::size_t l_prompt, std::size_t d, std::size_t steps,
                    const CacheBudget& budget, std::size_t retained, bool powerlaw) {
    const Distribution dist =
        powerlaw ? Distribution::PowerLawAttention : Distribution::Gaussian;
    const Matrix x = gen_workload(seed, l_prompt, d, dist);
    const AttentionResult attn =
        selective_flash_attn(x, x, x, default_scale(d), true, {64, 64});
    std::size_t hh_budget = retained;
    std::size_t rw_budget = 0;
    if (retained == 0) {
        hh_budget = static_cast<std::size_t>(budget.alpha_hh * static_cast<double>(l_prompt));
        rw_budget = static_cast<std::size_t>(budget.alpha_rw * static_cast<double>(l_prompt));
    }
    std::vector<Vector> qs, ks;
    Rng drng = Rng(seed).stream(0xDC);
    for (std::size_t s = 0; s < steps; ++s) {
        Vector q(d), k(d);
        for (float& val : q) val = drng.next_gaussian();
        for (float& val : k) val = drng.next_gaussian();
        qs.push_back(std::move(q));
        ks.push_back(std::move(k));
    }
    const H2OBaselineTrace trace =
        h2o_dynamic_baseline(x, attn.a_cumul, qs, ks, hh_budget, rw_budget, default_scale(d));
    const SelectionResult sel = select_token_counts(attn.a_cumul, hh_budget, rw_budget);
    const PersistenceReport report = persistence_analysis(trace, sel.hh);
    std::cout << "step,persistence_fraction\n";
    for (std::size_t s = 0; s < report.fractions.size(); ++s) {
        std::cout << s << ',' << report.fractions[s] << "\n";
    }
    std::cout << "final fraction: " << report.final_fraction << "\n";
    return kExitOk;
}

int cmd_dump(std::uint64_t seed, std::size_t l_prompt, std::size_t d, std::size_t steps,
             const CacheBudget& budget, std::size_t n_r, std::size_t group_size,
             const std::string& out_path) {
    const Matrix x = gen_workload(seed, l_prompt, d, Distribution::Gaussian);
    const AttentionResult attn =
        selective_flash_attn(x, x, x, default_scale(d), true, {64, 64});
    const auto hh = static_cast<std::size_t>(budget.alpha_hh * static_cast<double>(l_prompt));
    const auto rw = static_cast<std::size_t>(budget.alpha_rw * static_cast<double>(l_prompt));
    auto [cache, report] = prefill(x, x, attn.a_cumul, hh, rw, n_r, group_size);
    Rng drng = Rng(seed).stream(0xDC);
    for (std::size_t s = 0; s < steps; ++s) {
        Vector tq(d), tk(d), tv(d);
        for (float& v : tq) v = drng.next_gaussian();
        for (float& v : tk) v = drng.next_gaussian();
        for (float& v : tv) v = drng.next_gaussian();
        decode_step(cache, tq, tk, tv, default_scale(d));
    }
    save_cache(cache, out_path);
    std::cout << "snapshot written to " << out_path << " (" << cache.total_tokens()
              << " tokens, " << measured_bytes(cache) << " bytes)\n";
    return kExitOk;
}

int cmd_load(const std::string& in_path) {
    const KVCacheLayer cache = load_cache(in_path);
    if (cache.tokens_residual() >= cache.n_r ||
        cache.r_key.rows != cache.r_value.rows) {
        std::cerr << "invariant breach in loaded cache\n";
        return kExitInvariant;
    }
    std::cout << "loaded cache: d=" << cache.d << " n_r=" << cache.n_r
              << " group_size=" << cache.group_size
              << " tokens_quantized=" << cache.tokens_quantized
              << " tokens_residual=" << cache.tokens_residual()
              << " bytes=" << measured_bytes(cache) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KV-cache compression pipeline harness"};
    app.require_subcommand(1);
    app.fallthrough();  // lets `--seed` appear after the subcommand name

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global seed")->capture_default_str();

    // mem
    auto* mem = app.add_subcommand("mem", "KV cache size accounting tables");
    std::size_t mem_layers = 32, mem_hidden = 4096, mem_heads = 32, mem_prompt = 4096,
                mem_gen = 512;
    std::string mem_budget = "0.25,0.25";
    double mem_p = 0.15;
    std::string mem_json, mem_csv;
    mem->add_option("--layers", mem_layers)->capture_default_str();
    mem->add_option("--hidden", mem_hidden)->capture_default_str();
    mem->add_option("--heads", mem_heads)->capture_default_str();
    mem->add_option("--prompt", mem_prompt)->capture_default_str();
    mem->add_option("--gen", mem_gen)->capture_default_str();
    mem->add_option("--budget", mem_budget, "alpha_hh,alpha_rw")->capture_default_str();
    mem->add_option("--snapkv-p", mem_p, "SnapKV retained fraction")->capture_default_str();
    mem->add_option("--json", mem_json, "write JSON report here");
    mem->add_option("--csv", mem_csv, "write CSV report here");

    // run
    auto* run = app.add_subcommand("run", "full prefill+decode pipeline");
    std::string run_config_path, run_out, run_csv, run_budget = "0.25,0.25",
                run_policy = "uniform", run_dist = "gaussian", run_mode = "2bit";
    std::size_t run_layers = 4, run_d = 64, run_heads = 1, run_prompt = 256, run_steps = 32,
                run_nr = 128, run_gs = 16, run_depth = 7, run_bm = 64, run_bn = 64;
    run->add_option("--config", run_config_path, "JSON config file");
    run->add_option("--layers", run_layers)->capture_default_str();
    run->add_option("--dim", run_d)->capture_default_str();
    run->add_option("--heads", run_heads)->capture_default_str();
    run->add_option("--prompt", run_prompt)->capture_default_str();
    run->add_option("--steps", run_steps)->capture_default_str();
    run->add_option("--budget", run_budget)->capture_default_str();
    run->add_option("--policy", run_policy, "uniform|pyramid|var-prop|var-inv")
        ->capture_default_str();
    run->add_option("--depth", run_depth, "pyramid depth")->capture_default_str();
    run->add_option("--nr", run_nr, "residual flush period")->capture_default_str();
    run->add_option("--group-size", run_gs)->capture_default_str();
    run->add_option("--block-m", run_bm)->capture_default_str();
    run->add_option("--block-n", run_bn)->capture_default_str();
    run->add_option("--dist", run_dist, "gaussian|powerlaw")->capture_default_str();
    run->add_option("--quant", run_mode, "2bit|identity")->capture_default_str();
    run->add_option("--out", run_out, "trace JSON path (stdout if omitted)");
    run->add_option("--csv", run_csv, "metrics CSV path");

    // verify
    auto* verify = app.add_subcommand("verify", "run the invariant suite");

    // allocate
    auto* allocate = app.add_subcommand("allocate", "print per-layer budgets for a policy");
    std::string alloc_policy = "pyramid", alloc_vars;
    std::size_t alloc_layers = 32, alloc_total = 0, alloc_mean = 1024, alloc_depth = 7;
    allocate->add_option("--policy", alloc_policy)->capture_default_str();
    allocate->add_option("--layers", alloc_layers)->capture_default_str();
    allocate->add_option("--total", alloc_total, "total budget (uniform/variance)");
    allocate->add_option("--mean-budget", alloc_mean, "per-layer mean x (pyramid)")
        ->capture_default_str();
    allocate->add_option("--depth", alloc_depth)->capture_default_str();
    allocate->add_option("--variances", alloc_vars, "comma-separated per-layer variances");

    // persistence
    auto* persistence = app.add_subcommand("persistence", "heavy-hitter persistence analysis");
    std::size_t per_prompt = 256, per_d = 32, per_steps = 64, per_retained = 0;
    std::string per_budget = "0.25,0.25";
    bool per_powerlaw = true;
    persistence->add_option("--prompt", per_prompt)->capture_default_str();
    persistence->add_option("--dim", per_d)->capture_default_str();
    persistence->add_option("--steps", per_steps)->capture_default_str();
    persistence->add_option("--budget", per_budget)->capture_default_str();
    persistence->add_option("--retained", per_retained,
                            "absolute heavy-hitter count (overrides --budget)");
    persistence->add_flag("--powerlaw,!--gaussian", per_powerlaw)->capture_default_str();

    // dump / load
    auto* dump = app.add_subcommand("dump", "write a seeded cache snapshot");
    std::size_t dump_prompt = 64, dump_d = 32, dump_steps = 16, dump_nr = 16, dump_gs = 16;
    std::string dump_budget = "0.25,0.25", dump_out = "cache.bin";
    dump->add_option("--prompt", dump_prompt)->capture_default_str();
    dump->add_option("--dim", dump_d)->capture_default_str();
    dump->add_option("--steps", dump_steps)->capture_default_str();
    dump->add_option("--budget", dump_budget)->capture_default_str();
    dump->add_option("--nr", dump_nr)->capture_default_str();
    dump->add_option("--group-size", dump_gs)->capture_default_str();
    dump->add_option("--out", dump_out)->capture_default_str();

    auto* load = app.add_subcommand("load", "load and check a cache snapshot");
    std::string load_in;
    load->add_option("--in", load_in)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*mem) {
            return cmd_mem({mem_layers, mem_hidden, mem_heads}, {mem_prompt, mem_gen},
                           parse_budget(mem_budget), mem_p, mem_json, mem_csv);
        }
        if (*run) {
            RunConfig config;
            if (!run_config_path.empty()) {
                config = load_config(run_config_path);
                if (app.count("--seed") > 0) {
                    config.seed = seed;
                }
            } else {
                config.seed = seed;
                config.layers = run_layers;
                config.d = run_d;
                config.n_heads = run_heads;
                config.l_prompt = run_prompt;
                config.steps = run_steps;
                config.budget = parse_budget(run_budget);
                config.pyramid_depth = run_depth;
                config.n_r = run_nr;
                config.group_size = run_gs;
                config.tiles = {run_bm, run_bn};
                if (run_policy == "uniform") config.policy = AllocPolicy::Uniform;
                else if (run_policy == "pyramid") config.policy = AllocPolicy::Pyramid;
                else if (run_policy == "var-prop") config.policy = AllocPolicy::VarProp;
                else if (run_policy == "var-inv") config.policy = AllocPolicy::VarInv;
                else throw std::runtime_error("unknown policy: " + run_policy);
                if (run_dist == "gaussian") config.dist = Distribution::Gaussian;
                else if (run_dist == "powerlaw") config.dist = Distribution::PowerLawAttention;
                else throw std::runtime_error("unknown distribution: " + run_dist);
                if (run_mode == "2bit") config.mode = QuantMode::TwoBit;
                else if (run_mode == "identity") config.mode = QuantMode::Identity;
                else throw std::runtime_error("unknown quant mode: " + run_mode);
                config.validate();
            }
            return cmd_run(config, run_out, run_csv);
        }
        if (*verify) {
            return run_verify(seed, std::cout) ? kExitOk : kExitInvariant;
        }
        if (*allocate) {
            return cmd_allocate(alloc_policy, alloc_layers, alloc_total, alloc_mean,
                                alloc_depth, alloc_vars);
        }
        if (*persistence) {
            return cmd_persistence(seed, per_prompt, per_d, per_steps,
                                   parse_budget(per_budget), per_retained, per_powerlaw);
        }
        if (*dump) {
            return cmd_dump(seed, dump_prompt, dump_d, dump_steps, parse_budget(dump_budget),
                            dump_nr, dump_gs, dump_out);
        }
        if (*load) {
            return cmd_load(load_in);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
