#include "speckv/timing_model.hpp"

#include <algorithm>
#include <cmath>

namespace speckv {

void LatencyParams::validate() const {
    if (f_clk_hz <= 0) throw config_error("f_clk must be positive");
    if (bw_cxl <= 0 || bw_fpga_hbm <= 0 || bw_gpu_hbm <= 0) throw config_error("bandwidths must be positive");
    if (s_entry_bytes == 0) throw config_error("s_entry must be positive");
    if (omega_max == 0) throw config_error("omega_max must be >= 1");
    if (l_dma_cycles == 0) throw config_error("l_dma must be >= 1");
    if (sync_miss_ns <= 0 || prefetch_hit_ns <= 0) throw config_error("access latencies must be positive");
    if (sync_miss_ns < prefetch_hit_ns) throw config_error("sync miss latency must be >= prefetch hit latency");
    if (gpu_peak_flops <= 0) throw config_error("gpu_peak_flops must be positive");
    if (initiation_interval == 0) throw config_error("initiation interval must be >= 1");
}

std::uint64_t LatencyParams::ns_to_ticks(double ns) const {
    return static_cast<std::uint64_t>(std::ceil(ns_to_cycles(ns) - 1e-9));
}

std::uint32_t prefetch_latency_cycles(const LatencyParams& p) {
    return p.l_pred_cycles + p.l_atu_cycles + p.l_dma_cycles;
}

double decomp_effective_latency(const LatencyParams& p, double bypass_alpha) {
    if (bypass_alpha < 0.0 || bypass_alpha > 1.0) throw config_error("bypass fraction must lie in [0, 1]");
    return (1.0 - bypass_alpha) * p.l_crit_cycles + bypass_alpha * p.l_bypass_cycles;
}

double atu_expected_latency_cycles(const LatencyParams& p, double tlb_hit_rate) {
    if (tlb_hit_rate < 0.0 || tlb_hit_rate > 1.0) throw config_error("tlb hit rate must lie in [0, 1]");
    return 1.0 + (1.0 - tlb_hit_rate) * p.l_walk_cycles;
}

double effective_access_latency_ns(const LatencyParams& p, double hit_rate) {
    if (hit_rate < 0.0 || hit_rate > 1.0) throw config_error("hit rate must lie in [0, 1]");
    return hit_rate * p.prefetch_hit_ns + (1.0 - hit_rate) * p.sync_miss_ns;
}

double theta_eff_entries_per_s(const LatencyParams& p) {
    const double window_bound = static_cast<double>(p.omega_max) / p.l_dma_cycles * p.f_clk_hz;
    const double link_bound = p.bw_cxl / static_cast<double>(p.s_entry_bytes);
    return std::min(window_bound, link_bound);
}

bool stability_check(const LatencyParams& p, double lambda_rps, std::uint32_t depth_k, double hit_rate) {
    if (lambda_rps < 0) throw config_error("lambda must be nonnegative");
    if (hit_rate < 0.0 || hit_rate > 1.0) throw config_error("hit rate must lie in [0, 1]");
    return lambda_rps * depth_k * static_cast<double>(p.s_entry_bytes) < p.bw_cxl * hit_rate;
}

double t_effective(double t_compute, double t_prefetch, double t_layer) {
    return t_compute + std::max(t_prefetch - 2.0 * t_layer, 0.0);
}

double t_layer_roofline_s(const ModelGeometry& g, const LatencyParams& p, std::uint32_t batch_size) {
    if (batch_size == 0) throw config_error("batch_size must be >= 1");
    const double d = static_cast<double>(g.hidden_dim);
    // Dense projections dominate: attention qkv+out plus a 4x MLP.
    const double flops = 24.0 * d * d;
    const double weight_bytes = 12.0 * d * d * (g.precision_bits / 8.0);
    const double t_compute = flops / p.gpu_peak_flops;
    const double t_mem = weight_bytes / batch_size / p.bw_gpu_hbm;
    return std::max(t_compute, t_mem);
}

std::uint32_t engines_to_saturate(double gpu_bw, double theta_single) {
    if (gpu_bw <= 0 || theta_single <= 0) throw config_error("bandwidths must be positive");
    return static_cast<std::uint32_t>(std::ceil(gpu_bw / theta_single - 1e-12));
}

std::uint32_t engine_headroom(const std::vector<double>& utilization) {
    if (utilization.empty()) throw config_error("utilization vector must not be empty");
    double worst = 0.0;
    for (double u : utilization) {
        if (u <= 0.0 || u > 1.0) throw config_error("utilizations must lie in (0, 1]");
        worst = std::max(worst, u);
    }
    return static_cast<std::uint32_t>(std::floor(1.0 / worst + 1e-12));
}

AggregateThroughput aggregate_throughput(std::uint32_t n_engines, double theta_single, double gpu_bw,
                                         double contention) {
    if (n_engines == 0) throw config_error("engine count must be >= 1");
    if (theta_single <= 0 || gpu_bw <= 0) throw config_error("bandwidths must be positive");
    const double derate = std::max(0.0, 1.0 - contention * (n_engines - 1));
    const double linear = n_engines * theta_single * derate;
    AggregateThroughput out;
    out.total = std::min(linear, gpu_bw);
    out.efficiency = out.total / (n_engines * theta_single);
    return out;
}

std::uint32_t DeficitArbiter::pick(const std::vector<double>& queue_depths,
                                   const std::vector<double>& mean_latencies, double alpha) {
    if (queue_depths.empty() || queue_depths.size() != mean_latencies.size()) {
        throw config_error("arbiter inputs must be nonempty and equally sized");
    }
    if (alpha < 0.0 || alpha > 1.0) throw config_error("arbiter alpha must lie in [0, 1]");
    if (credit_.size() != queue_depths.size()) credit_.assign(queue_depths.size(), 0.0);

    double total = 0.0;
    for (std::size_t i = 0; i < queue_depths.size(); i++) {
        if (mean_latencies[i] <= 0.0) throw config_error("arbiter latencies must be positive");
        const double w = alpha * queue_depths[i] + (1.0 - alpha) / mean_latencies[i];
        credit_[i] += w;
        total += w;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < credit_.size(); i++) {
        if (credit_[i] > credit_[best]) best = i;
    }
    credit_[best] -= total;
    return static_cast<std::uint32_t>(best);
}

LinkChannel::Issue LinkChannel::issue(std::uint64_t now, std::uint64_t bytes) {
    std::uint64_t earliest = now;
    if (ready_times_.size() == window_) {
        // Window full: wait for the oldest outstanding transfer to land.
        earliest = std::max(earliest, ready_times_.front());
    }
    const std::uint64_t start = std::max(earliest, wire_free_);
    const double transfer_cycles = static_cast<double>(bytes) / bw_ * f_clk_;
    const std::uint64_t transfer = static_cast<std::uint64_t>(std::ceil(transfer_cycles - 1e-9));
    wire_free_ = start + transfer;
    const std::uint64_t ready = start + setup_ + transfer;
    bytes_total_ += bytes;

    ready_times_.push_back(ready);
    if (ready_times_.size() > window_) ready_times_.pop_front();
    recent_.emplace_back(start, ready);
    while (recent_.size() > 4096) recent_.pop_front();
    return {start, ready};
}

std::uint32_t LinkChannel::in_flight(std::uint64_t now) const {
    std::uint32_t n = 0;
    for (const auto& [start, ready] : recent_) {
        if (start <= now && now < ready) n++;
    }
    return n;
}

std::uint64_t LinkChannel::queued(std::uint64_t now) const {
    std::uint64_t n = 0;
    for (const auto& [start, ready] : recent_) {
        if (start > now) n++;
    }
    return n;
}

} // namespace speckv
