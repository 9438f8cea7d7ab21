// Command-line front end: run simulations, depth and engine sweeps, codec
// benchmarks, and the formula self-check suite.
//
// Exit codes: 0 success, 1 validation failure, 2 config error.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "speckv/kv_codec.hpp"
#include "speckv/model_config.hpp"
#include "speckv/rng.hpp"
#include "speckv/sim_config.hpp"
#include "speckv/sim_engine.hpp"
#include "speckv/timing_model.hpp"

namespace {

using namespace speckv;

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw config_error("cannot open output file: " + out_path);
    f << text;
    if (!f) throw config_error("failed writing output file: " + out_path);
}

// ---- validate: every closed-form example pinned to an exact expectation ----

struct CheckSink {
    int failures = 0;
    int total = 0;

    void check(const std::string& name, bool ok, const std::string& detail = "") {
        total++;
        if (ok) {
            std::cout << "PASS " << name << "\n";
        } else {
            failures++;
            std::cout << "FAIL " << name << (detail.empty() ? "" : " (" + detail + ")") << "\n";
        }
    }

    void near(const std::string& name, double got, double want, double tol) {
        std::ostringstream d;
        d << "want " << want << " got " << got;
        check(name, std::abs(got - want) <= tol, d.str());
    }

    void exact_u64(const std::string& name, std::uint64_t got, std::uint64_t want) {
        std::ostringstream d;
        d << "want " << want << " got " << got;
        check(name, got == want, d.str());
    }
};

int run_validate() {
    CheckSink s;
    LatencyParams lp;

    // Cache sizing arithmetic.
    {
        ModelGeometry g{1, 1, 1, 16, 1};
        s.exact_u64("kv_bytes_total unit geometry", kv_bytes_total(g, 1, 1), 4);
        ModelGeometry big{80, 8192, 64, 16, 2048};
        s.exact_u64("kv_bytes_total 70B-class geometry", kv_bytes_total(big, 32, 2048),
                    171798691840ull);
        ModelGeometry small{2, 64, 8, 8, 128};
        s.exact_u64("kv_bytes_total small int8 geometry", kv_bytes_total(small, 4, 128), 131072);
        s.exact_u64("kv_bytes_per_token_layer d=8192 fp16", kv_bytes_per_token_layer(big), 32768);
        s.exact_u64("kv_bytes_per_token_layer d=64 int8", kv_bytes_per_token_layer(small), 128);
        s.exact_u64("kv_bytes_per_token_layer unit", kv_bytes_per_token_layer(g), 4);
    }

    // Prefetch issue latency.
    s.exact_u64("prefetch_latency defaults", prefetch_latency_cycles(lp), 80);
    {
        LatencyParams p = lp;
        p.l_pred_cycles = 0;
        s.exact_u64("prefetch_latency without prediction stage", prefetch_latency_cycles(p), 16);
        p = lp;
        p.l_pred_cycles *= 2;
        p.l_atu_cycles *= 2;
        p.l_dma_cycles *= 2;
        s.exact_u64("prefetch_latency doubled components", prefetch_latency_cycles(p), 160);
    }

    // Address-translation expectation.
    s.near("atu_expected_latency all-hit", atu_expected_latency_cycles(lp, 1.0), 1.0, 0.0);
    s.near("atu_expected_latency 92% hits", atu_expected_latency_cycles(lp, 0.92), 2.2, 1e-12);
    s.near("atu_expected_latency all-miss", atu_expected_latency_cycles(lp, 0.0), 16.0, 0.0);

    // Decompression latency with bypass fraction.
    s.near("decomp_effective_latency alpha=0.3", decomp_effective_latency(lp, 0.3), 19.0, 1e-12);
    s.near("decomp_effective_latency alpha=0", decomp_effective_latency(lp, 0.0), 25.0, 0.0);
    s.near("decomp_effective_latency alpha=1", decomp_effective_latency(lp, 1.0), 5.0, 0.0);

    // Blended access latency.
    s.near("effective_access_latency H=0.947", effective_access_latency_ns(lp, 0.947), 367.945,
           1e-9);
    s.near("effective_access_latency all-hit", effective_access_latency_ns(lp, 1.0), 285.0, 0.0);
    s.near("effective_access_latency all-miss", effective_access_latency_ns(lp, 0.0), 1850.0, 0.0);

    // Steady-state staging throughput.
    s.near("theta_eff defaults wire-bound", theta_eff_entries_per_s(lp), 1.5625e7, 1e-3);
    {
        LatencyParams p = lp;
        p.omega_max = 1;
        p.l_dma_cycles = 800000000; // one full second per transfer
        s.near("theta_eff window-bound branch", theta_eff_entries_per_s(p), 1.0, 1e-9);
        p = lp;
        p.s_entry_bytes = 2048;
        s.near("theta_eff halved entry doubles", theta_eff_entries_per_s(p), 3.125e7, 1e-3);
    }

    // Speculation stability inequality.
    s.check("stability_check nominal load stable", stability_check(lp, 100.0, 4, 0.95));
    {
        const double lam_eq = lp.bw_cxl * 1.0 / (4.0 * static_cast<double>(lp.s_entry_bytes));
        s.check("stability_check boundary is unstable", !stability_check(lp, lam_eq, 4, 1.0));
        s.check("stability_check zero hit rate unstable", !stability_check(lp, 0.001, 1, 0.0));
    }

    // Pipelined prefetch effect.
    s.near("t_effective fully hidden boundary", t_effective(10.0, 4.0, 2.0), 10.0, 0.0);
    s.near("t_effective zero prefetch", t_effective(10.0, 0.0, 2.0), 10.0, 0.0);
    s.near("t_effective exposed remainder", t_effective(10.0, 7.0, 2.0), 13.0, 0.0);
    s.near("t_effective one past boundary", t_effective(10.0, 5.0, 2.0), 11.0, 0.0);

    // Engine scaling and headroom.
    s.exact_u64("engines_to_saturate 412 vs 1600", engines_to_saturate(1600.0, 412.0), 4);
    s.exact_u64("engine_headroom utilization table", engine_headroom({0.305, 0.140, 0.158, 0.259}),
                3);
    s.exact_u64("engine_headroom half-full", engine_headroom({0.5}), 2);
    s.exact_u64("engine_headroom saturated", engine_headroom({1.0}), 1);
    {
        const auto a1 = aggregate_throughput(1, 412.0, 1600.0);
        s.near("aggregate_throughput one engine", a1.total, 412.0, 1e-9);
        s.near("aggregate_throughput one engine efficiency", a1.efficiency, 1.0, 1e-9);
        const auto a2 = aggregate_throughput(2, 412.0, 1600.0);
        s.check("aggregate_throughput two engines near 798",
                std::abs(a2.total - 798.0) / 798.0 <= 0.05);
        const auto a3 = aggregate_throughput(3, 412.0, 1600.0);
        s.check("aggregate_throughput three engines near 1156",
                std::abs(a3.total - 1156.0) / 1156.0 <= 0.05);
        const auto a4 = aggregate_throughput(4, 412.0, 1600.0);
        s.check("aggregate_throughput four engines near 1487",
                std::abs(a4.total - 1487.0) / 1487.0 <= 0.05);
        s.check("aggregate_throughput four engine efficiency",
                a4.efficiency >= 0.88 && a4.efficiency <= 0.93);
        bool capped = true;
        for (std::uint32_t n = 1; n <= 16; ++n) {
            capped = capped && aggregate_throughput(n, 412.0, 1600.0).total <= 1600.0 + 1e-9;
        }
        s.check("aggregate_throughput never exceeds sink peak", capped);
    }

    // Quantization stage.
    {
        auto b = KvBlock::from_values(1, 3, {0.5f, -1.0f, 1.0f});
        auto [scale, q] = quantize(b);
        s.check("quantize half rounds away from zero",
                scale == 1.0f / 127.0f && q == std::vector<std::int8_t>{64, -127, 127});
        auto z = KvBlock::from_values(1, 4, {0.0f, 0.0f, 0.0f, 0.0f});
        auto [zs, zq] = quantize(z);
        s.check("quantize all-zero block", zs == 0.0f && zq == std::vector<std::int8_t>(4, 0));
        auto one = KvBlock::from_values(1, 1, {1.27f});
        auto [os, oq] = quantize(one);
        s.check("quantize max element maps to 127", oq.size() == 1 && oq[0] == 127 && os > 0.0f);
    }
    {
        auto back = dequantize(1.0f / 127.0f, {127}, 1, 1);
        s.check("dequantize max round trip", back.values == std::vector<float>{1.0f});
        auto zeros = dequantize(0.0f, std::vector<std::int8_t>(3, 0), 1, 3);
        s.check("dequantize zero scale", zeros.values == std::vector<float>(3, 0.0f));
        auto v = dequantize(0.01f, {64}, 1, 1);
        s.near("dequantize 64 at scale 0.01", v.values[0], 0.64, 1e-3);
    }

    // Delta stage.
    {
        const std::vector<std::uint8_t> row = {5, 7, 7, 7, 4};
        const std::vector<std::uint8_t> want = {5, 2, 0, 0, 253};
        s.check("delta_encode mixed row", delta_encode(row, 1, 5) == want);
        s.check("delta_decode mixed row", delta_decode(want, 1, 5) == row);
        const std::vector<std::uint8_t> konst = {9, 9, 9};
        const std::vector<std::uint8_t> kwant = {9, 0, 0};
        s.check("delta_encode constant row", delta_encode(konst, 1, 3) == kwant);
        s.check("delta_decode constant row", delta_decode(kwant, 1, 3) == konst);
        const std::vector<std::uint8_t> neg = {253};
        s.check("delta_encode singleton", delta_encode(neg, 1, 1) == neg);
        s.check("delta_decode singleton", delta_decode(neg, 1, 1) == neg);
    }

    // Run-length stage.
    {
        const std::vector<std::uint8_t> zeros4 = {0, 0, 0, 0};
        const std::vector<std::uint8_t> zeros4_enc = {0x00, 0x04};
        s.check("rle_encode single run", rle_encode(zeros4) == zeros4_enc);
        s.check("rle_decode single run", rle_decode(zeros4_enc) == zeros4);
        const std::vector<std::uint8_t> two = {1, 2, 2};
        const std::vector<std::uint8_t> two_enc = {0x01, 0x01, 0x02, 0x02};
        s.check("rle_encode two runs", rle_encode(two) == two_enc);
        s.check("rle_decode two runs", rle_decode(two_enc) == two);
        const std::vector<std::uint8_t> long_run(300, 0);
        const std::vector<std::uint8_t> long_enc = {0x00, 0xFF, 0x00, 0x2D};
        s.check("rle_encode split long run", rle_encode(long_run) == long_enc);
        s.check("rle_decode split long run", rle_decode(long_enc) == long_run);
    }

    // Deficit arbitration proportions (deterministic scheduler).
    {
        DeficitArbiter arb;
        std::vector<std::uint64_t> counts(2, 0);
        for (int i = 0; i < 1100; ++i) counts[arb.pick({10.0, 1.0}, {1.0, 1.0}, 1.0)]++;
        const double ratio = static_cast<double>(counts[0]) / static_cast<double>(counts[1]);
        s.near("arbiter queue-weighted 10:1", ratio, 10.0, 0.5);
        DeficitArbiter arb2;
        std::vector<std::uint64_t> c2(2, 0);
        for (int i = 0; i < 3000; ++i) c2[arb2.pick({1.0, 1.0}, {2.0, 1.0}, 0.0)]++;
        const double r2 = static_cast<double>(c2[1]) / static_cast<double>(c2[0]);
        s.near("arbiter latency-weighted 2:1", r2, 2.0, 0.1);
        DeficitArbiter arb3;
        std::vector<std::uint64_t> c3(2, 0);
        for (int i = 0; i < 1000; ++i) c3[arb3.pick({1.0, 1.0}, {1.0, 1.0}, 0.5)]++;
        s.check("arbiter symmetric split",
                c3[0] >= 499 && c3[0] <= 501 && c3[0] + c3[1] == 1000);
    }

    std::cout << s.total - s.failures << "/" << s.total << " formula checks passed\n";
    return s.failures == 0 ? 0 : 1;
}

// ---- simulate ----

int run_simulate(const std::string& config_path, std::int64_t seed, const std::string& format,
                 const std::string& out_path) {
    SimConfig cfg = SimConfig::from_file(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    SimEngine engine(cfg);
    const SimMetrics& m = engine.run();
    emit(format == "json" ? metrics_to_json(m) : metrics_to_csv(m), out_path);
    return 0;
}

// ---- sweep-k ----

std::vector<std::uint32_t> parse_arms(const std::string& text) {
    std::vector<std::uint32_t> arms;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(part, &used);
        } catch (const std::exception&) {
            throw config_error("bad arm value: " + part);
        }
        if (used != part.size() || v == 0 || v > 64) {
            throw config_error("arm values must be integers in [1, 64]: " + part);
        }
        arms.push_back(static_cast<std::uint32_t>(v));
    }
    if (arms.empty()) throw config_error("--arms needs at least one value");
    return arms;
}

int run_sweep_k(const std::string& config_path, const std::string& arms_text,
                const std::string& format, const std::string& out_path) {
    SimConfig cfg = SimConfig::from_file(config_path);
    const auto rows = sweep_k(cfg, parse_arms(arms_text));
    if (format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            arr.push_back({{"k", r.k},
                           {"hit_rate", r.hit_rate},
                           {"precision", r.precision},
                           {"coverage", r.coverage},
                           {"throughput_tokens_per_s", r.throughput_tps},
                           {"avg_token_latency_ms", r.avg_latency_ms}});
        }
        emit(arr.dump(2) + "\n", out_path);
    } else {
        std::ostringstream out;
        out << "k,hit_rate,precision,coverage,throughput_tokens_per_s,avg_token_latency_ms\n";
        for (const auto& r : rows) {
            out << r.k << ',' << nlohmann::json(r.hit_rate).dump() << ','
                << nlohmann::json(r.precision).dump() << ',' << nlohmann::json(r.coverage).dump()
                << ',' << nlohmann::json(r.throughput_tps).dump() << ','
                << nlohmann::json(r.avg_latency_ms).dump() << '\n';
        }
        emit(out.str(), out_path);
    }
    return 0;
}

// ---- scale ----

std::pair<std::uint32_t, std::uint32_t> parse_engine_range(const std::string& text) {
    const auto dots = text.find("..");
    auto to_u32 = [](const std::string& p) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(p, &used);
        } catch (const std::exception&) {
            throw config_error("bad engine count: " + p);
        }
        if (used != p.size() || v == 0 || v > 64) {
            throw config_error("engine counts must be integers in [1, 64]: " + p);
        }
        return static_cast<std::uint32_t>(v);
    };
    if (dots == std::string::npos) {
        const std::uint32_t n = to_u32(text);
        return {n, n};
    }
    const std::uint32_t lo = to_u32(text.substr(0, dots));
    const std::uint32_t hi = to_u32(text.substr(dots + 2));
    if (lo > hi) throw config_error("engine range must be min..max with min <= max");
    return {lo, hi};
}

int run_scale(const std::string& engines_text, double theta_gbps, double gpu_bw_gbps,
              std::uint64_t entry_bytes, double load, double duration_s, std::uint64_t seed,
              const std::string& format, const std::string& out_path) {
    const auto [lo, hi] = parse_engine_range(engines_text);
    const auto rows =
        sweep_engines(lo, hi, theta_gbps * 1e9, gpu_bw_gbps * 1e9, entry_bytes, load, duration_s, seed);
    if (format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            arr.push_back({{"engines", r.engines},
                           {"throughput_gbps", r.throughput_gbps},
                           {"efficiency", r.efficiency},
                           {"avg_latency_ns", r.avg_latency_ns},
                           {"p99_latency_ns", r.p99_latency_ns}});
        }
        emit(arr.dump(2) + "\n", out_path);
    } else {
        std::ostringstream out;
        out << "engines,throughput_gbps,efficiency,avg_latency_ns,p99_latency_ns\n";
        for (const auto& r : rows) {
            out << r.engines << ',' << nlohmann::json(r.throughput_gbps).dump() << ','
                << nlohmann::json(r.efficiency).dump() << ','
                << nlohmann::json(r.avg_latency_ns).dump() << ','
                << nlohmann::json(r.p99_latency_ns).dump() << '\n';
        }
        emit(out.str(), out_path);
    }
    return 0;
}

// ---- codec-bench ----

LayerCompressProfile parse_profile(const std::string& text, std::uint32_t layers) {
    if (text == "default") return LayerCompressProfile::default_profile(layers);
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            vals.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw config_error("bad profile ratio: " + part);
        }
    }
    if (vals.size() != 3) {
        throw config_error("--profile must be 'default' or three ratios early,mid,late");
    }
    LayerCompressProfile p = LayerCompressProfile::default_profile(layers);
    for (std::uint32_t l = 0; l < layers; ++l) {
        const double frac = layers == 1 ? 0.5 : static_cast<double>(l) / (layers - 1);
        p.ratio[l] = frac < 1.0 / 3.0 ? vals[0] : (frac > 2.0 / 3.0 ? vals[2] : vals[1]);
    }
    p.validate();
    return p;
}

int run_codec_bench(const std::string& scheme_text, const std::string& profile_text,
                    std::uint32_t layers, std::uint32_t blocks_per_layer, std::uint32_t rows,
                    std::uint32_t cols, std::uint64_t seed, const std::string& format,
                    const std::string& out_path) {
    const Scheme scheme = scheme_from_name(scheme_text);
    const LayerCompressProfile profile = parse_profile(profile_text, layers);
    Rng rng(seed);

    struct LayerRow {
        std::uint32_t layer;
        double target;
        double measured;
        double bypass_fraction;
    };
    std::vector<LayerRow> table;
    std::uint64_t raw_total = 0, stored_total = 0, bypassed_total = 0, blocks_total = 0;
    bool roundtrip_ok = true;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint32_t l = 0; l < layers; ++l) {
        const double target = std::clamp(profile.at(l), 1.5, 8.0);
        std::uint64_t raw = 0, stored = 0, bypassed = 0;
        for (std::uint32_t b = 0; b < blocks_per_layer; ++b) {
            const KvBlock block = make_correlated_block(rng, rows, cols, target);
            bool was_bypassed = false;
            const CompressedBlock cb = compress(block, scheme, &was_bypassed);
            const auto wire = serialize(cb);
            const CompressedBlock back = deserialize(wire);
            const KvBlock rt = decompress(back);
            if (cb.scheme != Scheme::Raw) {
                auto [sc, q] = quantize(block);
                const KvBlock ref = dequantize(sc, q, block.rows, block.cols);
                roundtrip_ok = roundtrip_ok && rt.values == ref.values;
            } else {
                roundtrip_ok = roundtrip_ok && rt.values == block.values;
            }
            raw += block.raw_bytes();
            stored += cb.stored_bytes();
            if (was_bypassed) bypassed++;
        }
        raw_total += raw;
        stored_total += stored;
        bypassed_total += bypassed;
        blocks_total += blocks_per_layer;
        table.push_back(LayerRow{l + 1, profile.at(l),
                                 static_cast<double>(raw) / static_cast<double>(stored),
                                 static_cast<double>(bypassed) / blocks_per_layer});
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double wall_s = std::chrono::duration<double>(t1 - t0).count();
    const double overall = static_cast<double>(raw_total) / static_cast<double>(stored_total);
    const double mbps = wall_s > 0 ? static_cast<double>(raw_total) / wall_s / 1e6 : 0.0;
    const double bypass_frac = static_cast<double>(bypassed_total) / static_cast<double>(blocks_total);

    if (format == "json") {
        nlohmann::ordered_json j;
        j["scheme"] = scheme_name(scheme);
        j["layers"] = layers;
        j["blocks_per_layer"] = blocks_per_layer;
        j["rows"] = rows;
        j["cols"] = cols;
        j["overall_ratio"] = overall;
        j["bypass_fraction"] = bypass_frac;
        j["roundtrip_exact"] = roundtrip_ok;
        j["throughput_mb_per_s"] = mbps;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : table) {
            arr.push_back({{"layer", r.layer},
                           {"target_ratio", r.target},
                           {"measured_ratio", r.measured},
                           {"bypass_fraction", r.bypass_fraction}});
        }
        j["per_layer"] = arr;
        emit(j.dump(2) + "\n", out_path);
    } else {
        std::ostringstream out;
        out << "layer,target_ratio,measured_ratio,bypass_fraction\n";
        for (const auto& r : table) {
            out << r.layer << ',' << nlohmann::json(r.target).dump() << ','
                << nlohmann::json(r.measured).dump() << ','
                << nlohmann::json(r.bypass_fraction).dump() << '\n';
        }
        out << "overall," << nlohmann::json(overall).dump() << ','
            << nlohmann::json(bypass_frac).dump() << ','
            << (roundtrip_ok ? "roundtrip_exact" : "roundtrip_BROKEN") << '\n';
        emit(out.str(), out_path);
    }
    return roundtrip_ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tiered KV-cache simulator, prefetch sweeps, and compression codec bench"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "csv";
    std::int64_t seed_override = -1;

    auto* sim = app.add_subcommand("simulate", "Run one simulation and report metrics");
    sim->add_option("--config", config_path, "Config file (key = value lines)")->required();
    sim->add_option("--seed", seed_override, "Override sim.seed");
    sim->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sim->add_option("--out", out_path, "Write report to this path instead of stdout");

    std::string arms_text = "1,2,4,8,16";
    auto* swk = app.add_subcommand("sweep-k", "Re-run one config across prefetch depths");
    swk->add_option("--config", config_path, "Config file")->required();
    swk->add_option("--arms", arms_text, "Comma-separated depth list, e.g. 1,2,4,8,16");
    swk->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    swk->add_option("--out", out_path, "Write table to this path instead of stdout");

    std::string engines_text = "1..4";
    double theta_gbps = 412.0, gpu_bw_gbps = 1600.0, load = 0.85, duration_s = 0.01;
    std::uint64_t entry_bytes = 4096, scale_seed = 42;
    auto* scl = app.add_subcommand("scale", "Sweep staging-engine count");
    scl->add_option("--engines", engines_text, "Range min..max or a single count");
    scl->add_option("--theta-gbps", theta_gbps, "Single-engine throughput, GB/s");
    scl->add_option("--gpu-bw-gbps", gpu_bw_gbps, "Sink bandwidth, GB/s");
    scl->add_option("--entry-bytes", entry_bytes, "Transfer unit in bytes");
    scl->add_option("--load", load, "Open-loop load fraction in (0,1)");
    scl->add_option("--duration-s", duration_s, "Simulated seconds per point");
    scl->add_option("--seed", scale_seed, "Arrival RNG seed");
    scl->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    scl->add_option("--out", out_path, "Write table to this path instead of stdout");

    std::string scheme_text = "int8_delta_rle", profile_text = "default";
    std::uint32_t cb_layers = 24, cb_blocks = 16, cb_rows = 16, cb_cols = 256;
    std::uint64_t cb_seed = 1;
    auto* cbn = app.add_subcommand("codec-bench", "Compress synthetic tiles per layer profile");
    cbn->add_option("--scheme", scheme_text, "raw, int8, int8_delta, or int8_delta_rle");
    cbn->add_option("--profile", profile_text, "'default' or early,mid,late target ratios");
    cbn->add_option("--layers", cb_layers, "Layer count")->check(CLI::PositiveNumber);
    cbn->add_option("--blocks", cb_blocks, "Blocks per layer")->check(CLI::PositiveNumber);
    cbn->add_option("--rows", cb_rows, "Tokens per block")->check(CLI::PositiveNumber);
    cbn->add_option("--cols", cb_cols, "Channels per block")->check(CLI::PositiveNumber);
    cbn->add_option("--seed", cb_seed, "Block RNG seed");
    cbn->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    cbn->add_option("--out", out_path, "Write table to this path instead of stdout");

    auto* val = app.add_subcommand("validate", "Run every built-in formula example");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return run_simulate(config_path, seed_override, format, out_path);
        if (swk->parsed()) return run_sweep_k(config_path, arms_text, format, out_path);
        if (scl->parsed()) {
            return run_scale(engines_text, theta_gbps, gpu_bw_gbps, entry_bytes, load, duration_s,
                             scale_seed, format, out_path);
        }
        if (cbn->parsed()) {
            return run_codec_bench(scheme_text, profile_text, cb_layers, cb_blocks, cb_rows,
                                   cb_cols, cb_seed, format, out_path);
        }
        if (val->parsed()) return run_validate();
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
