#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "speckv/adaptation.hpp"
#include "speckv/memory_hierarchy.hpp"
#include "speckv/prefetcher.hpp"
#include "speckv/sim_config.hpp"
#include "speckv/timing_model.hpp"
#include "speckv/workload.hpp"

namespace speckv {

struct QueueSample {
    std::uint64_t tick = 0;
    double depth = 0.0; // time-averaged requests in system over the window
};

// Everything a run reports. Rates that have no observations stay NaN and
// serialize as null (JSON) or an empty value (CSV).
struct SimMetrics {
    std::uint64_t tokens_committed = 0;
    std::uint64_t requests_arrived = 0;
    std::uint64_t requests_admitted = 0;
    std::uint64_t requests_completed = 0;
    std::uint64_t final_tick = 0;
    double sim_seconds = 0.0;
    double throughput_tps = 0.0;

    double hit_rate = 0.0;  // prefetch hits / decode reads
    double coverage = 0.0;  // reads whose page any prefetch touched / decode reads
    double precision = 0.0; // consumed entries / issued entries

    double avg_latency_ms = 0.0;
    double p50_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    double p99_latency_ms = 0.0;
    double avg_ttft_ms = 0.0;
    double effective_access_ns = 0.0; // mean over staged hits and sync fetches

    std::uint64_t decode_reads = 0;
    std::uint64_t prefetch_hits = 0;
    std::uint64_t local_hits = 0;
    std::uint64_t sync_fallbacks = 0;
    std::uint64_t prefetches_issued = 0;
    std::uint64_t prefetches_consumed = 0;
    std::uint64_t windows_invalidated = 0;

    double cxl_read_util = 0.0;
    double cxl_write_util = 0.0;
    double fpga_hbm_util = 0.0;
    double gpu_hbm_util = 0.0;
    double tlb_hit_rate = 0.0;

    double queue_depth_mean = 0.0;
    double queue_depth_max = 0.0;
    double queue_depth_slope = 0.0; // per sample window, least squares
    bool unstable = false;

    double throttle_beta = 1.0;
    std::uint32_t prefetch_depth_final = 0;
    std::string scheme_final;

    HierarchyCounters hier;
    PrefetchCounters pref;
    std::vector<QueueSample> queue_series;
};

std::string metrics_to_csv(const SimMetrics& m);
std::string metrics_to_json(const SimMetrics& m);

// Batch-synchronous decode simulator over the tiered hierarchy: arrivals and
// admission, prefill, per-layer decode with speculative staging, commit-time
// prediction, writeback drains, epoch migration, and online controllers.
class SimEngine {
public:
    // Loads cfg.trace_file if set, otherwise synthesizes a workload trace.
    explicit SimEngine(const SimConfig& cfg);
    // Runs the given trace verbatim; an empty trace yields a zero-work report.
    SimEngine(const SimConfig& cfg, std::vector<RequestTrace> trace);

    const SimMetrics& run();

    const SimMetrics& metrics() const { return metrics_; }
    const SimConfig& config() const { return cfg_; }
    const MemoryHierarchy& hierarchy() const { return mem_; }
    const std::vector<RequestTrace>& trace() const { return trace_; }

private:
    enum class Ev : std::uint8_t { Arrival, PrefillDone, Step, Epoch, Adapt, Sample };
    struct Event {
        std::uint64_t tick;
        std::uint64_t seq;
        Ev kind;
        std::uint32_t arg;
    };
    struct EventAfter {
        bool operator()(const Event& a, const Event& b) const {
            if (a.tick != b.tick) return a.tick > b.tick;
            return a.seq > b.seq;
        }
    };

    struct ActiveRequest {
        std::uint32_t trace_idx = 0;
        std::uint32_t id = 0;
        std::uint64_t arrival_tick = 0;
        std::uint32_t in_len = 0;
        std::uint32_t out_len = 0;
        std::uint32_t committed = 0;
        bool prefilling = true;
        std::deque<std::uint32_t> history;
    };

    enum class Outcome : std::uint8_t { Staged, Local, Sync };

    void build_predictor();
    void check_feasibility() const;
    void push_event(std::uint64_t tick, Ev kind, std::uint32_t arg);
    void schedule_step(std::uint64_t tick);
    bool work_remaining() const;

    void on_arrival(std::uint64_t now, std::uint32_t trace_idx);
    void try_admit(std::uint64_t now);
    bool allocate_request(const RequestTrace& r);
    void on_prefill_done(std::uint64_t now, std::uint32_t id);
    void on_step(std::uint64_t now);
    Outcome resolve_access(ActiveRequest& r, std::uint32_t layer, std::uint64_t now,
                           std::uint64_t* stall_cycles);
    void commit_token(ActiveRequest& r, std::uint64_t now, std::uint64_t iter_start);
    void drain_writebacks(std::uint64_t now);
    void on_epoch(std::uint64_t now);
    void on_adapt(std::uint64_t now);
    void on_sample(std::uint64_t now);
    void update_queue(std::uint64_t now);
    double queue_depth_now() const;
    void finalize();

    static void flush_hook_thunk(void* ctx, KvPage& page);

    SimConfig cfg_;
    std::vector<RequestTrace> trace_;
    LayerCompressProfile profile_;
    MemoryHierarchy mem_;
    LinkChannel read_link_;
    LinkChannel write_link_;
    std::unique_ptr<Prefetcher> prefetcher_;
    ThrottleState throttle_;
    DepthController depth_ctl_;
    SchemeSelector selector_;
    Rng scheme_rng_;

    std::uint64_t t_layer_cycles_ = 1;
    std::uint64_t hit_cycles_ = 1;
    std::uint64_t sync_cycles_ = 1;
    std::uint64_t weight_bytes_per_layer_ = 0;
    std::uint64_t kv_write_bytes_ = 0;

    std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
    std::uint64_t seq_ = 0;
    bool step_scheduled_ = false;
    bool ran_ = false;
    bool stop_ = false;
    std::uint64_t cur_tick_ = 0;
    std::uint64_t final_tick_ = 0;
    std::uint64_t busy_until_ = 0; // end of the decode iteration currently in flight

    std::deque<std::uint32_t> admission_; // trace indices, arrival order
    std::map<std::uint32_t, ActiveRequest> active_;

    SimMetrics metrics_;
    std::vector<double> token_lat_ns_;
    std::vector<double> ttft_ns_;
    double hit_lat_sum_ns_ = 0.0;
    double sync_lat_sum_ns_ = 0.0;
    std::uint64_t covered_reads_ = 0;
    std::uint64_t gpu_bytes_ = 0;

    double q_integral_ = 0.0;
    std::uint64_t q_last_tick_ = 0;
    std::uint64_t q_window_start_ = 0;
    double q_max_inst_ = 0.0;
    std::vector<QueueSample> samples_;

    std::uint64_t adapt_last_read_bytes_ = 0;
    std::uint64_t adapt_last_committed_ = 0;
    std::uint64_t adapt_count_ = 0;
    Scheme scheme_current_;
};

struct KSweepRow {
    std::uint32_t k = 0;
    double hit_rate = 0.0;
    double precision = 0.0;
    double coverage = 0.0;
    double throughput_tps = 0.0;
    double avg_latency_ms = 0.0;
};

// Re-runs the config at each depth with the identical trace and controllers off.
std::vector<KSweepRow> sweep_k(const SimConfig& base, const std::vector<std::uint32_t>& arms);

struct EngineSweepRow {
    std::uint32_t engines = 0;
    double throughput_gbps = 0.0;
    double efficiency = 0.0; // vs n * theta_single
    double avg_latency_ns = 0.0;
    double p99_latency_ns = 0.0;
};

// Two-stage micro-simulation of n prefetch engines feeding one GPU-side sink:
// closed-loop saturation measures throughput; an open-loop run at
// load_fraction of that capacity measures latency percentiles.
std::vector<EngineSweepRow> sweep_engines(std::uint32_t min_engines, std::uint32_t max_engines,
                                          double theta_single_bytes_per_s, double gpu_bw_bytes_per_s,
                                          std::uint64_t entry_bytes, double load_fraction,
                                          double sim_seconds, std::uint64_t seed);

} // namespace speckv
