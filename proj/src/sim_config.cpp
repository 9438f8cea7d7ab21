#include "speckv/sim_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace speckv {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) b++;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) e--;
    return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "': not a number: " + value);
    }
    if (used != value.size()) throw config_error("config key '" + key + "': trailing junk: " + value);
    if (!std::isfinite(v)) throw config_error("config key '" + key + "': must be finite");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    // Accept binary suffixes for sizes: 8m == 8 * 2^20.
    std::string body = value;
    std::uint64_t mult = 1;
    if (!body.empty()) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(body.back())));
        if (c == 'k' || c == 'm' || c == 'g') {
            mult = c == 'k' ? (1ull << 10) : c == 'm' ? (1ull << 20) : (1ull << 30);
            body.pop_back();
        }
    }
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(body, &used);
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "': not an unsigned integer: " + value);
    }
    if (used != body.size()) throw config_error("config key '" + key + "': trailing junk: " + value);
    return static_cast<std::uint64_t>(v) * mult;
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
    const std::uint64_t v = parse_u64(key, value);
    if (v > 0xffffffffull) throw config_error("config key '" + key + "': value too large");
    return static_cast<std::uint32_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw config_error("config key '" + key + "': expected a boolean, got: " + value);
}

} // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::istringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        line_no++;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw config_error("config line " + std::to_string(line_no) + ": empty key or value");
        }
        if (!seen.insert(key).second) {
            throw config_error("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

SimConfig SimConfig::from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot open config file: " + path);
    std::ostringstream body;
    body << f.rdbuf();
    return from_string(body.str());
}

SimConfig SimConfig::from_string(const std::string& text) {
    const auto pairs = parse_kv_text(text);
    SimConfig c;
    // The profile key seeds the workload block; explicit workload keys then
    // override it regardless of their position in the file.
    for (const auto& [key, value] : pairs) {
        if (key == "workload.profile" && value != "custom") {
            c.workload = WorkloadProfile::preset(value);
        }
    }
    for (const auto& [key, value] : pairs) {
        if (key == "model.layers") c.model.layers = parse_u32(key, value);
        else if (key == "model.hidden_dim") c.model.hidden_dim = parse_u32(key, value);
        else if (key == "model.heads") c.model.heads = parse_u32(key, value);
        else if (key == "model.precision_bits") c.model.precision_bits = parse_u32(key, value);
        else if (key == "model.max_seq") c.model.max_seq = parse_u32(key, value);
        else if (key == "serving.batch_size") c.serving.batch_size = parse_u32(key, value);
        else if (key == "serving.page_size") c.serving.page_size = parse_u64(key, value);
        else if (key == "serving.l1_capacity") c.serving.l1_capacity = parse_u64(key, value);
        else if (key == "serving.l2_capacity") c.serving.l2_capacity = parse_u64(key, value);
        else if (key == "serving.l3_capacity") c.serving.l3_capacity = parse_u64(key, value);
        else if (key == "serving.prefetch_depth") c.serving.prefetch_depth = parse_u32(key, value);
        else if (key == "serving.history_len") c.serving.history_len = parse_u32(key, value);
        else if (key == "timing.f_clk_hz") c.timing.f_clk_hz = parse_double(key, value);
        else if (key == "timing.l_pred_cycles") c.timing.l_pred_cycles = parse_u32(key, value);
        else if (key == "timing.l_atu_cycles") c.timing.l_atu_cycles = parse_u32(key, value);
        else if (key == "timing.l_dma_cycles") c.timing.l_dma_cycles = parse_u32(key, value);
        else if (key == "timing.l_walk_cycles") c.timing.l_walk_cycles = parse_u32(key, value);
        else if (key == "timing.l_crit_cycles") c.timing.l_crit_cycles = parse_u32(key, value);
        else if (key == "timing.l_bypass_cycles") c.timing.l_bypass_cycles = parse_u32(key, value);
        else if (key == "timing.pipeline_depth") c.timing.pipeline_depth = parse_u32(key, value);
        else if (key == "timing.initiation_interval") c.timing.initiation_interval = parse_u32(key, value);
        else if (key == "timing.omega_max") c.timing.omega_max = parse_u32(key, value);
        else if (key == "timing.s_entry_bytes") c.timing.s_entry_bytes = parse_u64(key, value);
        else if (key == "timing.bw_cxl") c.timing.bw_cxl = parse_double(key, value);
        else if (key == "timing.bw_fpga_hbm") c.timing.bw_fpga_hbm = parse_double(key, value);
        else if (key == "timing.bw_gpu_hbm") c.timing.bw_gpu_hbm = parse_double(key, value);
        else if (key == "timing.hbm_channels") c.timing.hbm_channels = parse_u32(key, value);
        else if (key == "timing.sync_miss_ns") c.timing.sync_miss_ns = parse_double(key, value);
        else if (key == "timing.prefetch_hit_ns") c.timing.prefetch_hit_ns = parse_double(key, value);
        else if (key == "timing.gpu_peak_flops") c.timing.gpu_peak_flops = parse_double(key, value);
        else if (key == "workload.profile") { /* handled above */ }
        else if (key == "workload.lambda_rps") c.workload.lambda_rps = parse_double(key, value);
        else if (key == "workload.input_min") c.workload.input_min = parse_u32(key, value);
        else if (key == "workload.input_max") c.workload.input_max = parse_u32(key, value);
        else if (key == "workload.output_min") c.workload.output_min = parse_u32(key, value);
        else if (key == "workload.output_max") c.workload.output_max = parse_u32(key, value);
        else if (key == "workload.accuracy") c.workload.accuracy = parse_double(key, value);
        else if (key == "workload.trace_file") c.trace_file = value;
        else if (key == "workload.arrival_window_s") c.arrival_window_s = parse_double(key, value);
        else if (key == "predictor.kind") c.predictor_kind = value;
        else if (key == "predictor.accuracy") c.predictor_accuracy = parse_double(key, value);
        else if (key == "predictor.order") c.predictor_order = parse_u32(key, value);
        else if (key == "predictor.corruption") c.predictor_corruption = parse_double(key, value);
        else if (key == "predictor.train_tokens") c.predictor_train_tokens = parse_u64(key, value);
        else if (key == "migration.t_hot") c.t_hot = parse_double(key, value);
        else if (key == "migration.t_cold") c.t_cold = parse_double(key, value);
        else if (key == "migration.threshold_step") c.threshold_step = parse_double(key, value);
        else if (key == "migration.l1_miss_target") c.l1_miss_target = parse_double(key, value);
        else if (key == "migration.epoch_ticks") c.epoch_ticks = parse_u64(key, value);
        else if (key == "tlb.entries") c.tlb_entries = parse_u32(key, value);
        else if (key == "tlb.ways") c.tlb_ways = parse_u32(key, value);
        else if (key == "adapt.throttle") c.adapt_throttle = parse_bool(key, value);
        else if (key == "adapt.kappa") c.throttle_kappa = parse_double(key, value);
        else if (key == "adapt.util_target") c.util_target = parse_double(key, value);
        else if (key == "adapt.depth") c.adapt_depth = parse_bool(key, value);
        else if (key == "adapt.beta_ucb") c.beta_ucb = parse_double(key, value);
        else if (key == "adapt.scheme") c.adapt_scheme = parse_bool(key, value);
        else if (key == "adapt.q_min") c.q_min = parse_double(key, value);
        else if (key == "adapt.interval_ticks") c.adapt_interval_ticks = parse_u64(key, value);
        else if (key == "codec.scheme") c.codec_scheme = value;
        else if (key == "codec.ratio_early") c.ratio_early = parse_double(key, value);
        else if (key == "codec.ratio_mid") c.ratio_mid = parse_double(key, value);
        else if (key == "codec.ratio_late") c.ratio_late = parse_double(key, value);
        else if (key == "sim.seed") c.seed = parse_u64(key, value);
        else if (key == "sim.max_ticks") c.max_ticks = parse_u64(key, value);
        else if (key == "sim.max_tokens") c.max_tokens = parse_u64(key, value);
        else if (key == "sim.sample_interval_ticks") c.sample_interval_ticks = parse_u64(key, value);
        else if (key == "sim.commit_overhead_cycles") c.commit_overhead_cycles = parse_u32(key, value);
        else if (key == "sim.prefill_parallel") c.prefill_parallel = parse_u32(key, value);
        else if (key == "baseline.mode") c.baseline = value;
        else throw config_error("unknown config key: " + key);
    }
    c.validate();
    return c;
}

void SimConfig::validate() const {
    model.validate();
    serving.validate();
    timing.validate();
    workload.validate();
    scheme_from_name(codec_scheme);
    if (predictor_kind != "oracle" && predictor_kind != "markov" && predictor_kind != "replay") {
        throw config_error("predictor.kind must be oracle, markov, or replay");
    }
    if (predictor_accuracy >= 0.0 && predictor_accuracy > 1.0) {
        throw config_error("predictor.accuracy must lie in [0, 1]");
    }
    if (!(predictor_corruption >= 0.0 && predictor_corruption <= 1.0)) {
        throw config_error("predictor.corruption must lie in [0, 1]");
    }
    if (baseline != "none" && baseline != "gpu_only" && baseline != "no_spec") {
        throw config_error("baseline.mode must be none, gpu_only, or no_spec");
    }
    for (double r : {ratio_early, ratio_mid, ratio_late}) {
        if (!(r >= 1.0 && r <= 8.0)) throw config_error("codec ratios must lie in [1, 8]");
    }
    if (!(arrival_window_s > 0.0)) throw config_error("workload.arrival_window_s must be positive");
    if (t_hot <= t_cold) throw config_error("migration.t_hot must exceed migration.t_cold");
    if (!(threshold_step > 0.0 && threshold_step < 1.0)) {
        throw config_error("migration.threshold_step must lie in (0, 1)");
    }
    if (!(l1_miss_target > 0.0 && l1_miss_target < 1.0)) {
        throw config_error("migration.l1_miss_target must lie in (0, 1)");
    }
    if (epoch_ticks == 0 || adapt_interval_ticks == 0 || sample_interval_ticks == 0) {
        throw config_error("epoch, adapt, and sample intervals must be at least 1 tick");
    }
    if (prefill_parallel == 0) throw config_error("sim.prefill_parallel must be at least 1");
    if (tokens_per_page() == 0) {
        throw config_error("serving.page_size holds less than one token of one layer's K+V");
    }
}

std::uint64_t SimConfig::tokens_per_page() const {
    return serving.page_size / kv_bytes_per_token_layer(model);
}

HierarchyConfig SimConfig::hierarchy() const {
    HierarchyConfig h;
    h.page_size = serving.page_size;
    h.tokens_per_page = tokens_per_page();
    h.l1_capacity = serving.l1_capacity;
    h.l2_capacity = serving.l2_capacity;
    h.l3_capacity = serving.l3_capacity;
    h.tlb_entries = tlb_entries;
    h.tlb_ways = tlb_ways;
    h.walk_cycles = timing.l_walk_cycles;
    h.t_hot = t_hot;
    h.t_cold = t_cold;
    h.threshold_step = threshold_step;
    h.l1_miss_target = l1_miss_target;
    h.epoch_ticks = epoch_ticks;
    return h;
}

LayerCompressProfile SimConfig::compress_profile() const {
    LayerCompressProfile p = LayerCompressProfile::default_profile(model.layers);
    for (std::uint32_t l = 0; l < p.ratio.size(); l++) {
        const double frac = (p.ratio.size() == 1) ? 0.5 : static_cast<double>(l) / (p.ratio.size() - 1);
        if (frac < 1.0 / 3.0) p.ratio[l] = ratio_early;
        else if (frac > 2.0 / 3.0) p.ratio[l] = ratio_late;
        else p.ratio[l] = ratio_mid;
    }
    p.validate();
    return p;
}

} // namespace speckv
