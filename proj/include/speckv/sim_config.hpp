#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speckv/kv_codec.hpp"
#include "speckv/memory_hierarchy.hpp"
#include "speckv/model_config.hpp"
#include "speckv/timing_model.hpp"
#include "speckv/workload.hpp"

namespace speckv {

// Full simulation setup, read from a flat "key = value" file ('#' comments,
// one key per line, unknown or duplicate keys rejected).
struct SimConfig {
    ModelGeometry model;
    ServingConfig serving;
    LatencyParams timing;

    // Workload: either a generated profile or a replayed trace file.
    WorkloadProfile workload = WorkloadProfile::preset("chatbot");
    std::string trace_file;
    double arrival_window_s = 2.0;

    // Predictor driving speculation.
    std::string predictor_kind = "oracle"; // oracle | markov | replay
    double predictor_accuracy = -1.0;      // < 0: use workload.accuracy
    std::uint32_t predictor_order = 2;
    double predictor_corruption = 0.05;
    std::uint64_t predictor_train_tokens = 200000;

    // Migration policy.
    double t_hot = 4.0;
    double t_cold = 1.0;
    double threshold_step = 0.10;
    double l1_miss_target = 0.06;
    std::uint64_t epoch_ticks = 65536;
    std::uint32_t tlb_entries = 64;
    std::uint32_t tlb_ways = 4;

    // Online controllers (all off by default; enabled per run).
    bool adapt_throttle = false;
    double throttle_kappa = 0.5;
    double util_target = 0.72;
    bool adapt_depth = false;
    double beta_ucb = 1.0;
    bool adapt_scheme = false;
    double q_min = 0.98;
    std::uint64_t adapt_interval_ticks = 65536;

    // Codec behavior for pool-resident pages.
    std::string codec_scheme = "int8_delta_rle";
    double ratio_early = 3.6;
    double ratio_mid = 3.25;
    double ratio_late = 2.75;

    // Run control.
    std::uint64_t seed = 42;
    std::uint64_t max_ticks = 0;  // 0: run until the trace drains
    std::uint64_t max_tokens = 0; // 0: unlimited
    std::uint64_t sample_interval_ticks = 1ull << 20;
    std::uint32_t commit_overhead_cycles = 160;
    std::uint32_t prefill_parallel = 4;
    std::string baseline = "none"; // none | gpu_only | no_spec

    static SimConfig from_file(const std::string& path);
    static SimConfig from_string(const std::string& text);

    void validate() const;

    std::uint64_t tokens_per_page() const;
    HierarchyConfig hierarchy() const;
    LayerCompressProfile compress_profile() const;
};

// Low-level parser, exposed for tests: ordered (key, value) pairs with
// comments stripped; rejects malformed lines and duplicate keys.
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);

} // namespace speckv
