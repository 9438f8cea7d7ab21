#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "speckv/errors.hpp"
#include "speckv/model_config.hpp"

namespace speckv {

// Cycle-level constants for the accelerator datapath and links. Cycle terms are
// in f_clk cycles; bandwidths in bytes/s; *_ns values in nanoseconds.
struct LatencyParams {
    double f_clk_hz = 800e6;
    std::uint32_t l_pred_cycles = 64;      // predictor pass
    std::uint32_t l_atu_cycles = 4;        // translation budget in the prefetch path
    std::uint32_t l_dma_cycles = 12;       // DMA setup
    std::uint32_t l_walk_cycles = 15;      // page-table walk on TLB miss
    std::uint32_t l_crit_cycles = 25;      // decompressor critical path
    std::uint32_t l_bypass_cycles = 5;     // decompressor bypass path
    std::uint32_t pipeline_depth = 20;
    std::uint32_t initiation_interval = 1;
    std::uint32_t omega_max = 16;          // outstanding DMA window
    std::uint64_t s_entry_bytes = 4096;
    double bw_cxl = 64e9;
    double bw_fpga_hbm = 1600e9;
    double bw_gpu_hbm = 1600e9;
    std::uint32_t hbm_channels = 16;
    double sync_miss_ns = 1850.0;
    double prefetch_hit_ns = 285.0;
    double gpu_peak_flops = 312e12;

    void validate() const;

    double ns_to_cycles(double ns) const { return ns * 1e-9 * f_clk_hz; }
    double cycles_to_ns(double cycles) const { return cycles / f_clk_hz * 1e9; }
    // GPU-side durations are charged in whole cycles, rounded up.
    std::uint64_t ns_to_ticks(double ns) const;
};

// Prefetch critical path before the data transfer itself: prediction,
// translation, DMA setup.
std::uint32_t prefetch_latency_cycles(const LatencyParams& p);

// Mean decompressor latency when a fraction bypass_alpha of blocks take the
// bypass path.
double decomp_effective_latency(const LatencyParams& p, double bypass_alpha);

// Expected translation cost: hit cost 1 plus the walk on misses.
double atu_expected_latency_cycles(const LatencyParams& p, double tlb_hit_rate);

// Mean access latency in ns over prefetch hits and sync fallbacks.
double effective_access_latency_ns(const LatencyParams& p, double hit_rate);

// Sustained prefetch rate in entries/s: min of the outstanding-window bound
// (omega_max / l_dma cycles, converted by f_clk) and the link bound (bw / entry).
double theta_eff_entries_per_s(const LatencyParams& p);

// Strict feasibility of speculative demand: lambda * k * s_entry < bw_cxl * hit_rate.
bool stability_check(const LatencyParams& p, double lambda_rps, std::uint32_t depth_k, double hit_rate);

// Token latency with the prefetch pipelined two layers ahead:
// t_compute + max(t_prefetch - 2 * t_layer, 0).
double t_effective(double t_compute, double t_prefetch, double t_layer);

// Roofline per-layer decode time in seconds. Weight traffic amortizes over the
// batch; compute is the dense-block cost per token.
double t_layer_roofline_s(const ModelGeometry& g, const LatencyParams& p, std::uint32_t batch_size);

// --- multi-engine scaling ---

// How many engines a single GPU can feed: ceil(gpu_bw / theta_single).
std::uint32_t engines_to_saturate(double gpu_bw, double theta_single);

// Largest replication factor before some shared resource saturates:
// floor(1 / max utilization). Utilizations must lie in (0, 1].
std::uint32_t engine_headroom(const std::vector<double>& utilization);

struct AggregateThroughput {
    double total;      // bytes/s after contention, capped by the GPU-side bound
    double efficiency; // total / (n * theta_single)
};

// Linear contention model: each added engine costs a fixed fraction of peak.
inline constexpr double kContentionPerEngine = 0.033;

AggregateThroughput aggregate_throughput(std::uint32_t n_engines, double theta_single, double gpu_bw,
                                         double contention = kContentionPerEngine);

// Deterministic smoothed weighted round-robin. Weight w_i = alpha * queue_i +
// (1 - alpha) / latency_i; each slot every entrant earns its weight, the
// highest credit wins (ties to the lowest id) and pays the total weight.
class DeficitArbiter {
public:
    // queue_depths and mean_latencies must have equal nonzero size; latencies positive.
    std::uint32_t pick(const std::vector<double>& queue_depths, const std::vector<double>& mean_latencies,
                       double alpha);

private:
    std::vector<double> credit_;
};

// One direction of a transfer link: fixed setup latency, serialized wire time,
// and a bounded outstanding window. All times in ticks.
class LinkChannel {
public:
    LinkChannel(double bw_bytes_per_s, double f_clk_hz, std::uint32_t setup_cycles, std::uint32_t window)
        : bw_(bw_bytes_per_s), f_clk_(f_clk_hz), setup_(setup_cycles), window_(window) {}

    struct Issue {
        std::uint64_t start;  // when the wire picks it up
        std::uint64_t ready;  // when the payload has fully arrived
    };

    // Queues a transfer at tick `now`; returns deterministic start/ready times.
    Issue issue(std::uint64_t now, std::uint64_t bytes);

    std::uint64_t free_at() const { return wire_free_; }
    bool idle(std::uint64_t now) const { return wire_free_ <= now; }
    std::uint32_t in_flight(std::uint64_t now) const;
    std::uint64_t queued(std::uint64_t now) const; // issued but wire not yet started
    std::uint64_t total_bytes() const { return bytes_total_; }

private:
    double bw_;
    double f_clk_;
    std::uint32_t setup_;
    std::uint32_t window_;
    std::uint64_t wire_free_ = 0;
    std::uint64_t bytes_total_ = 0;
    std::deque<std::uint64_t> ready_times_; // last `window_` completions
    std::deque<std::pair<std::uint64_t, std::uint64_t>> recent_; // (start, ready) for gauges
};

} // namespace speckv
