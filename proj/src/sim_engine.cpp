#include "speckv/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "speckv/model_config.hpp"

namespace speckv {

namespace {

constexpr std::uint32_t kPositionSlack = 16; // widest candidate window reach

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (idx == 0) idx = 1;
    if (idx > n) idx = n;
    return v[idx - 1];
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double ratio_or_nan(double num, double den) {
    return den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

std::vector<RequestTrace> load_or_generate(const SimConfig& cfg) {
    cfg.validate(); // the delegated ctor validates too, but gen_trace runs first
    if (!cfg.trace_file.empty()) return read_trace(cfg.trace_file);
    return gen_trace(cfg.workload, cfg.arrival_window_s, cfg.timing.f_clk_hz, cfg.seed);
}

} // namespace

SimEngine::SimEngine(const SimConfig& cfg) : SimEngine(cfg, load_or_generate(cfg)) {}

SimEngine::SimEngine(const SimConfig& cfg, std::vector<RequestTrace> trace)
    : cfg_((cfg.validate(), cfg)), // validate before any derived construction below
      trace_(std::move(trace)),
      profile_(cfg_.compress_profile()),
      mem_(cfg_.hierarchy()),
      read_link_(cfg_.timing.bw_cxl, cfg_.timing.f_clk_hz, cfg_.timing.l_dma_cycles, cfg_.timing.omega_max),
      write_link_(cfg_.timing.bw_cxl, cfg_.timing.f_clk_hz, cfg_.timing.l_dma_cycles, cfg_.timing.omega_max),
      throttle_(cfg_.throttle_kappa, cfg_.util_target),
      depth_ctl_(cfg_.beta_ucb),
      selector_(0.5, 0.4, 0.1, cfg_.q_min, 0.05),
      scheme_rng_(Rng(cfg_.seed).fork(11)),
      scheme_current_(scheme_from_name(cfg_.codec_scheme)) {
    for (const auto& r : trace_) {
        if (static_cast<std::uint64_t>(r.input_len) + r.output_len > cfg_.model.max_seq) {
            throw config_error("trace request " + std::to_string(r.request_id) +
                               " exceeds model.max_seq");
        }
    }
    check_feasibility();
    build_predictor();
    mem_.set_flush_hook(&SimEngine::flush_hook_thunk, this);

    const double t_layer_s = t_layer_roofline_s(cfg_.model, cfg_.timing, cfg_.serving.batch_size);
    t_layer_cycles_ = std::max<std::uint64_t>(1, cfg_.timing.ns_to_ticks(t_layer_s * 1e9));
    hit_cycles_ = std::max<std::uint64_t>(1, cfg_.timing.ns_to_ticks(cfg_.timing.prefetch_hit_ns));
    sync_cycles_ = std::max<std::uint64_t>(1, cfg_.timing.ns_to_ticks(cfg_.timing.sync_miss_ns));
    const std::uint64_t elem_bytes = cfg_.model.precision_bits / 8;
    weight_bytes_per_layer_ = 12ull * cfg_.model.hidden_dim * cfg_.model.hidden_dim * elem_bytes;
    kv_write_bytes_ = kv_bytes_per_token_layer(cfg_.model);
}

void SimEngine::build_predictor() {
    if (cfg_.baseline != "none") return; // baselines run without speculation
    Rng root(cfg_.seed);
    std::unique_ptr<TokenPredictor> pred;
    if (cfg_.predictor_kind == "oracle") {
        const double acc = cfg_.predictor_accuracy >= 0 ? cfg_.predictor_accuracy : cfg_.workload.accuracy;
        pred = std::make_unique<OracleNoisyPredictor>(acc, kVocabSize, root.fork(10));
    } else if (cfg_.predictor_kind == "markov") {
        auto markov = std::make_unique<MarkovPredictor>(cfg_.predictor_order, kVocabSize);
        if (cfg_.trace_file.empty()) {
            // Train on a held-out stream from the same source process.
            TokenProcess proc(TokenProcess::calibrate_temperature(cfg_.workload.accuracy), cfg_.seed);
            Rng train_rng = root.fork(12);
            const auto stream =
                proc.generate(static_cast<std::uint32_t>(cfg_.predictor_train_tokens), train_rng);
            markov->train(stream);
        } else {
            for (const auto& r : trace_) markov->train(r.tokens);
        }
        pred = std::move(markov);
    } else {
        pred = std::make_unique<ReplayPredictor>(cfg_.predictor_corruption, kVocabSize, root.fork(10));
    }
    prefetcher_ = std::make_unique<Prefetcher>(mem_, read_link_, cfg_.timing, std::move(pred),
                                               cfg_.serving.prefetch_depth, cfg_.model.layers);
}

void SimEngine::check_feasibility() const {
    const std::uint64_t tpp = cfg_.tokens_per_page();
    for (const auto& r : trace_) {
        const std::uint64_t positions = static_cast<std::uint64_t>(r.input_len) + r.output_len + kPositionSlack;
        const std::uint64_t pages = (positions + tpp - 1) / tpp;
        std::uint64_t stored = 0;
        for (std::uint32_t l = 1; l <= cfg_.model.layers; ++l) {
            stored += pages * static_cast<std::uint64_t>(std::ceil(
                                  static_cast<double>(cfg_.serving.page_size) / profile_.at(l - 1)));
        }
        if (stored > cfg_.serving.l3_capacity) {
            throw config_error("request " + std::to_string(r.request_id) +
                               " can never fit the far pool; config infeasible");
        }
    }
}

void SimEngine::push_event(std::uint64_t tick, Ev kind, std::uint32_t arg) {
    events_.push(Event{tick, seq_++, kind, arg});
}

void SimEngine::schedule_step(std::uint64_t tick) {
    if (step_scheduled_) return;
    step_scheduled_ = true;
    // A decode iteration is processed as one lumped event; anything that wants
    // a new iteration must queue behind the one still in flight.
    push_event(std::max(tick, busy_until_), Ev::Step, 0);
}

bool SimEngine::work_remaining() const {
    return metrics_.requests_arrived < trace_.size() || !admission_.empty() || !active_.empty();
}

const SimMetrics& SimEngine::run() {
    if (ran_) return metrics_;
    ran_ = true;
    for (std::uint32_t i = 0; i < trace_.size(); ++i) {
        push_event(trace_[i].arrival_tick, Ev::Arrival, i);
    }
    if (work_remaining()) {
        push_event(cfg_.epoch_ticks, Ev::Epoch, 0);
        push_event(cfg_.adapt_interval_ticks, Ev::Adapt, 0);
        push_event(cfg_.sample_interval_ticks, Ev::Sample, 0);
    }
    while (!events_.empty() && !stop_) {
        const Event ev = events_.top();
        events_.pop();
        if (cfg_.max_ticks > 0 && ev.tick > cfg_.max_ticks) {
            final_tick_ = std::max(final_tick_, cfg_.max_ticks);
            break;
        }
        // Maintenance events scheduled past the last real work must not
        // stretch the run (they would inflate final_tick and throughput).
        if ((ev.kind == Ev::Epoch || ev.kind == Ev::Adapt || ev.kind == Ev::Sample) &&
            !work_remaining()) {
            continue;
        }
        cur_tick_ = ev.tick;
        final_tick_ = std::max(final_tick_, ev.tick);
        switch (ev.kind) {
            case Ev::Arrival: on_arrival(ev.tick, ev.arg); break;
            case Ev::PrefillDone: on_prefill_done(ev.tick, ev.arg); break;
            case Ev::Step: on_step(ev.tick); break;
            case Ev::Epoch: on_epoch(ev.tick); break;
            case Ev::Adapt: on_adapt(ev.tick); break;
            case Ev::Sample: on_sample(ev.tick); break;
        }
    }
    finalize();
    return metrics_;
}

void SimEngine::on_arrival(std::uint64_t now, std::uint32_t trace_idx) {
    update_queue(now);
    metrics_.requests_arrived++;
    admission_.push_back(trace_idx);
    q_max_inst_ = std::max(q_max_inst_, queue_depth_now());
    try_admit(now);
}

bool SimEngine::allocate_request(const RequestTrace& r) {
    const std::uint64_t tpp = cfg_.tokens_per_page();
    const std::uint64_t positions = static_cast<std::uint64_t>(r.input_len) + r.output_len + kPositionSlack;
    const std::uint32_t pages = static_cast<std::uint32_t>((positions + tpp - 1) / tpp);
    for (std::uint32_t l = 1; l <= cfg_.model.layers; ++l) {
        for (std::uint32_t pi = 0; pi < pages; ++pi) {
            if (!mem_.allocate(r.request_id, l, pi, profile_.at(l - 1))) {
                mem_.free_request(r.request_id);
                return false;
            }
        }
    }
    return true;
}

void SimEngine::try_admit(std::uint64_t now) {
    while (!admission_.empty() && active_.size() < cfg_.serving.batch_size) {
        const std::uint32_t idx = admission_.front();
        const RequestTrace& tr = trace_[idx];
        if (!allocate_request(tr)) break; // pool full; retry on the next completion
        admission_.pop_front();
        ActiveRequest ar;
        ar.trace_idx = idx;
        ar.id = tr.request_id;
        ar.arrival_tick = tr.arrival_tick;
        ar.in_len = tr.input_len;
        ar.out_len = tr.output_len;
        active_.emplace(ar.id, ar);
        metrics_.requests_admitted++;
        const std::uint64_t prefill =
            (static_cast<std::uint64_t>(tr.input_len) * cfg_.model.layers * t_layer_cycles_ +
             cfg_.prefill_parallel - 1) /
            cfg_.prefill_parallel;
        push_event(now + std::max<std::uint64_t>(prefill, 1), Ev::PrefillDone, ar.id);
    }
}

void SimEngine::on_prefill_done(std::uint64_t now, std::uint32_t id) {
    auto it = active_.find(id);
    if (it == active_.end()) return;
    ActiveRequest& r = it->second;
    r.prefilling = false;
    const RequestTrace& tr = trace_[r.trace_idx];
    const std::uint64_t tpp = cfg_.tokens_per_page();
    const std::uint32_t prompt_pages = static_cast<std::uint32_t>((r.in_len + tpp - 1) / tpp);
    if (cfg_.baseline != "gpu_only") {
        for (std::uint32_t l = 1; l <= cfg_.model.layers; ++l) {
            for (std::uint32_t pi = 0; pi < prompt_pages; ++pi) {
                auto pid = mem_.find_page(id, l, static_cast<std::uint64_t>(pi) * tpp);
                if (pid) mem_.write_new_kv(*pid, now);
            }
        }
        drain_writebacks(now);
    }
    gpu_bytes_ += static_cast<std::uint64_t>(r.in_len) * cfg_.model.layers * kv_write_bytes_;
    const std::uint32_t hist = std::min<std::uint32_t>(cfg_.serving.history_len, r.in_len);
    for (std::uint32_t i = r.in_len - hist; i < r.in_len; ++i) r.history.push_back(tr.tokens[i]);
    if (prefetcher_) {
        std::vector<std::uint32_t> h(r.history.begin(), r.history.end());
        prefetcher_->on_commit(id, h, r.in_len, tr.tokens[r.in_len], true, now);
    }
    schedule_step(now + cfg_.commit_overhead_cycles);
}

SimEngine::Outcome SimEngine::resolve_access(ActiveRequest& r, std::uint32_t layer, std::uint64_t now,
                                             std::uint64_t* stall_cycles) {
    const std::uint64_t pos = r.in_len + r.committed;
    metrics_.decode_reads++;
    if (cfg_.baseline == "gpu_only") {
        gpu_bytes_ += cfg_.serving.page_size;
        *stall_cycles = 0;
        metrics_.local_hits++;
        return Outcome::Local;
    }
    // Device-local fast path: a page already resident in L1 is read as part of
    // the attention kernel's own memory streams, so it adds no serial stall and
    // involves no far-side translation.
    if (auto local = mem_.find_page(r.id, layer, pos)) {
        if (mem_.lookup(*local, now) == Tier::L1) {
            if (mem_.page(*local).prefetch_touched) covered_reads_++;
            gpu_bytes_ += cfg_.serving.page_size;
            mem_.note_l1_access(true);
            metrics_.local_hits++;
            *stall_cycles = 0;
            return Outcome::Local;
        }
    }
    mem_.note_l1_access(false);
    const PrefetchWindow* w = prefetcher_ ? prefetcher_->window(r.id) : nullptr;
    const bool contained = w && w->active && w->contained_rank >= 0;
    std::uint64_t charge = 0;
    std::optional<MemoryHierarchy::Xlate> xa;

    if (contained) {
        const std::uint64_t slot_pos = w->base_pos + static_cast<std::uint32_t>(w->contained_rank);
        auto xs = mem_.try_translate(r.id, layer, slot_pos, now);
        if (xs) {
            charge += xs->cycles;
            if (mem_.staged_entry_ready(xs->page, now + charge)) {
                mem_.consume_staged(xs->page, now + charge);
                charge += hit_cycles_;
                hit_lat_sum_ns_ += cfg_.timing.prefetch_hit_ns;
                metrics_.prefetch_hits++;
                covered_reads_++; // staged entries are prefetch-produced by definition
                gpu_bytes_ += cfg_.serving.page_size;
                *stall_cycles = charge;
                return Outcome::Staged;
            }
            if (slot_pos == pos) xa = xs; // already translated the demand position
        }
    }
    if (!xa) {
        xa = mem_.try_translate(r.id, layer, pos, now);
        if (!xa) throw translation_fault("decode position unmapped; engine invariant broken");
        charge += xa->cycles;
    }
    KvPage& target = mem_.page(xa->page);
    if (target.prefetch_touched) covered_reads_++;
    const auto iss = read_link_.issue(now + charge, target.stored_bytes);
    const std::uint64_t wire_wait = iss.start - (now + charge);
    charge += wire_wait + sync_cycles_;
    sync_lat_sum_ns_ += cfg_.timing.cycles_to_ns(static_cast<double>(wire_wait)) + cfg_.timing.sync_miss_ns;
    mem_.sync_promote(xa->page, now + charge);
    metrics_.sync_fallbacks++;
    gpu_bytes_ += cfg_.serving.page_size;
    *stall_cycles = charge;
    return Outcome::Sync;
}

void SimEngine::on_step(std::uint64_t now) {
    step_scheduled_ = false;
    std::vector<std::uint32_t> ids;
    ids.reserve(active_.size());
    for (const auto& [id, r] : active_) {
        if (!r.prefilling) ids.push_back(id);
    }
    if (ids.empty()) return;

    std::uint64_t t = now;
    for (std::uint32_t layer = 1; layer <= cfg_.model.layers; ++layer) {
        if (prefetcher_) {
            for (std::uint32_t id : ids) prefetcher_->on_layer_start(id, layer, t);
        }
        std::uint64_t max_stall = 0;
        for (std::uint32_t id : ids) {
            std::uint64_t stall = 0;
            resolve_access(active_.at(id), layer, t, &stall);
            max_stall = std::max(max_stall, stall);
        }
        gpu_bytes_ += weight_bytes_per_layer_;
        t += t_layer_cycles_ + max_stall;
    }
    busy_until_ = t + cfg_.commit_overhead_cycles;

    // Commit phase: sample the token, persist its KV, predict the next step.
    for (std::uint32_t id : ids) {
        auto it = active_.find(id);
        ActiveRequest& r = it->second;
        commit_token(r, t, now);
        if (r.committed == r.out_len) {
            if (prefetcher_) prefetcher_->drop_request(id);
            mem_.free_request(id);
            update_queue(t);
            active_.erase(it);
            metrics_.requests_completed++;
            try_admit(t);
        }
    }
    drain_writebacks(t);
    final_tick_ = std::max(final_tick_, t + cfg_.commit_overhead_cycles);
    if (cfg_.max_tokens > 0 && metrics_.tokens_committed >= cfg_.max_tokens) {
        stop_ = true;
        return;
    }
    for (const auto& [id, r] : active_) {
        if (!r.prefilling) {
            schedule_step(t + cfg_.commit_overhead_cycles);
            break;
        }
    }
}

void SimEngine::commit_token(ActiveRequest& r, std::uint64_t now, std::uint64_t iter_start) {
    const RequestTrace& tr = trace_[r.trace_idx];
    const std::uint64_t pos = r.in_len + r.committed;
    if (cfg_.baseline != "gpu_only") {
        for (std::uint32_t l = 1; l <= cfg_.model.layers; ++l) {
            auto pid = mem_.find_page(r.id, l, pos);
            if (pid) mem_.write_new_kv(*pid, now);
        }
    }
    gpu_bytes_ += static_cast<std::uint64_t>(cfg_.model.layers) * kv_write_bytes_;
    r.history.push_back(tr.tokens[pos]);
    while (r.history.size() > cfg_.serving.history_len) r.history.pop_front();
    r.committed++;
    metrics_.tokens_committed++;
    const double iter_ns =
        cfg_.timing.cycles_to_ns(static_cast<double>(now + cfg_.commit_overhead_cycles - iter_start));
    token_lat_ns_.push_back(iter_ns);
    if (r.committed == 1) {
        ttft_ns_.push_back(cfg_.timing.cycles_to_ns(static_cast<double>(now - r.arrival_tick)));
    }
    if (r.committed < r.out_len && prefetcher_) {
        const PrefetchWindow* w = prefetcher_->window(r.id);
        if (w && w->active && w->contained_rank < 0) prefetcher_->invalidate_window(r.id);
        std::vector<std::uint32_t> h(r.history.begin(), r.history.end());
        const std::uint64_t next_pos = pos + 1;
        prefetcher_->on_commit(r.id, h, next_pos, tr.tokens[next_pos], true, now);
    }
}

void SimEngine::drain_writebacks(std::uint64_t now) {
    if (!write_link_.idle(now)) return;
    while (auto pid = mem_.pop_writeback()) {
        const auto iss = write_link_.issue(now, mem_.page(*pid).stored_bytes);
        mem_.writeback_complete(*pid, iss.ready);
    }
}

void SimEngine::on_epoch(std::uint64_t now) {
    mem_.epoch_scan(now);
    if (work_remaining()) push_event(now + cfg_.epoch_ticks, Ev::Epoch, 0);
}

void SimEngine::on_adapt(std::uint64_t now) {
    const double interval_s = static_cast<double>(cfg_.adapt_interval_ticks) / cfg_.timing.f_clk_hz;
    const std::uint64_t read_delta = read_link_.total_bytes() - adapt_last_read_bytes_;
    const std::uint64_t committed_delta = metrics_.tokens_committed - adapt_last_committed_;
    adapt_last_read_bytes_ = read_link_.total_bytes();
    adapt_last_committed_ = metrics_.tokens_committed;
    adapt_count_++;

    const double util = static_cast<double>(read_delta) / (cfg_.timing.bw_cxl * interval_s);
    if (cfg_.adapt_throttle) throttle_.step(util);

    std::uint32_t depth = cfg_.serving.prefetch_depth;
    if (cfg_.adapt_depth) {
        const double iter_cycles = static_cast<double>(cfg_.model.layers) * t_layer_cycles_ +
                                   cfg_.commit_overhead_cycles;
        const double ideal_tokens =
            static_cast<double>(cfg_.serving.batch_size) * cfg_.adapt_interval_ticks / iter_cycles;
        const double reward =
            ideal_tokens > 0 ? std::min(1.5, static_cast<double>(committed_delta) / ideal_tokens) : 0.0;
        depth_ctl_.report(reward);
        depth = depth_ctl_.adapt();
    }
    if (cfg_.adapt_throttle) depth = throttle_.effective_depth(depth);
    if (prefetcher_ && (cfg_.adapt_depth || cfg_.adapt_throttle)) prefetcher_->set_depth(depth);

    if (cfg_.adapt_scheme && adapt_count_ % 16 == 0) {
        const std::uint32_t layer = static_cast<std::uint32_t>((adapt_count_ / 16 - 1) % cfg_.model.layers);
        const double target = std::clamp(profile_.at(layer), 1.5, 8.0);
        const KvBlock block = make_correlated_block(scheme_rng_, 8, 128, target);
        auto [scale, q] = quantize(block);
        double err2 = 0, norm = 0;
        for (std::size_t i = 0; i < block.values.size(); ++i) {
            const double d = static_cast<double>(block.values[i]) - static_cast<double>(scale) * q[i];
            err2 += d * d;
            norm = std::max(norm, std::abs(static_cast<double>(block.values[i])));
        }
        const double rmse = std::sqrt(err2 / static_cast<double>(block.values.size()));
        const double q_int8 = norm > 0 ? 1.0 - rmse / norm : 1.0;
        std::vector<SchemeCandidate> cands = {
            {Scheme::Raw, 1.0, 1.0, static_cast<double>(cfg_.timing.l_bypass_cycles)},
            {Scheme::Int8, measure_ratio(block, Scheme::Int8), q_int8,
             static_cast<double>(cfg_.timing.l_crit_cycles)},
            {Scheme::Int8Delta, measure_ratio(block, Scheme::Int8Delta), q_int8,
             static_cast<double>(cfg_.timing.l_crit_cycles) + 2},
            {Scheme::Int8DeltaRle, measure_ratio(block, Scheme::Int8DeltaRle), q_int8,
             static_cast<double>(cfg_.timing.l_crit_cycles) + 4},
        };
        scheme_current_ = selector_.select(cands);
        double chosen_score = 0;
        for (const auto& c : cands) {
            if (c.scheme == scheme_current_) {
                chosen_score = SchemeSelector::score(c, selector_.w_ratio(), selector_.w_quality(),
                                                     selector_.w_latency());
            }
        }
        selector_.weight_update(chosen_score / 8.0, scheme_rng_);
    }
    if (work_remaining()) push_event(now + cfg_.adapt_interval_ticks, Ev::Adapt, 0);
}

void SimEngine::on_sample(std::uint64_t now) {
    update_queue(now);
    const std::uint64_t span = now - q_window_start_;
    if (span > 0) {
        samples_.push_back(QueueSample{now, q_integral_ / static_cast<double>(span)});
        q_integral_ = 0;
        q_window_start_ = now;
    }
    if (work_remaining()) push_event(now + cfg_.sample_interval_ticks, Ev::Sample, 0);
}

double SimEngine::queue_depth_now() const {
    return static_cast<double>(admission_.size() + active_.size());
}

void SimEngine::update_queue(std::uint64_t now) {
    if (now > q_last_tick_) {
        q_integral_ += queue_depth_now() * static_cast<double>(now - q_last_tick_);
        q_last_tick_ = now;
    }
    q_max_inst_ = std::max(q_max_inst_, queue_depth_now());
}

void SimEngine::flush_hook_thunk(void* ctx, KvPage& page) {
    auto* self = static_cast<SimEngine*>(ctx);
    self->write_link_.issue(self->cur_tick_, page.stored_bytes);
}

void SimEngine::finalize() {
    update_queue(final_tick_);
    if (final_tick_ > q_window_start_) {
        samples_.push_back(
            QueueSample{final_tick_, q_integral_ / static_cast<double>(final_tick_ - q_window_start_)});
    }

    SimMetrics& m = metrics_;
    m.final_tick = final_tick_;
    m.sim_seconds = static_cast<double>(final_tick_) / cfg_.timing.f_clk_hz;
    m.throughput_tps = ratio_or_nan(static_cast<double>(m.tokens_committed), m.sim_seconds);
    m.hit_rate = ratio_or_nan(static_cast<double>(m.prefetch_hits), static_cast<double>(m.decode_reads));
    m.coverage = ratio_or_nan(static_cast<double>(covered_reads_), static_cast<double>(m.decode_reads));
    if (prefetcher_) {
        m.pref = prefetcher_->counters();
        m.prefetches_issued = m.pref.issued;
        m.windows_invalidated = m.pref.windows_invalidated;
    }
    m.hier = mem_.counters();
    m.prefetches_consumed = m.hier.consumed;
    m.precision = ratio_or_nan(static_cast<double>(m.prefetches_consumed),
                               static_cast<double>(m.prefetches_issued));

    std::vector<double> lat_ms;
    lat_ms.reserve(token_lat_ns_.size());
    for (double ns : token_lat_ns_) lat_ms.push_back(ns * 1e-6);
    m.avg_latency_ms = mean_of(lat_ms);
    m.p50_latency_ms = percentile(lat_ms, 0.50);
    m.p95_latency_ms = percentile(lat_ms, 0.95);
    m.p99_latency_ms = percentile(lat_ms, 0.99);
    std::vector<double> ttft_ms;
    ttft_ms.reserve(ttft_ns_.size());
    for (double ns : ttft_ns_) ttft_ms.push_back(ns * 1e-6);
    m.avg_ttft_ms = mean_of(ttft_ms);

    m.effective_access_ns = ratio_or_nan(hit_lat_sum_ns_ + sync_lat_sum_ns_,
                                         static_cast<double>(m.prefetch_hits + m.sync_fallbacks));

    if (m.sim_seconds > 0) {
        m.cxl_read_util = static_cast<double>(read_link_.total_bytes()) /
                          (cfg_.timing.bw_cxl * m.sim_seconds);
        m.cxl_write_util = static_cast<double>(write_link_.total_bytes()) /
                           (cfg_.timing.bw_cxl * m.sim_seconds);
        m.fpga_hbm_util = static_cast<double>(read_link_.total_bytes() + write_link_.total_bytes()) /
                          (cfg_.timing.bw_fpga_hbm * m.sim_seconds);
        m.gpu_hbm_util = static_cast<double>(gpu_bytes_) / (cfg_.timing.bw_gpu_hbm * m.sim_seconds);
    } else {
        m.cxl_read_util = m.cxl_write_util = m.fpga_hbm_util = m.gpu_hbm_util =
            std::numeric_limits<double>::quiet_NaN();
    }
    const auto& tlb = mem_.tlb();
    m.tlb_hit_rate = ratio_or_nan(static_cast<double>(tlb.hits()),
                                  static_cast<double>(tlb.hits() + tlb.misses()));

    m.queue_series = samples_;
    if (!samples_.empty()) {
        double sum = 0, maxd = 0;
        for (const auto& s : samples_) {
            sum += s.depth;
            maxd = std::max(maxd, s.depth);
        }
        m.queue_depth_mean = sum / static_cast<double>(samples_.size());
        m.queue_depth_max = maxd;
        // Least-squares slope over sample index.
        const double n = static_cast<double>(samples_.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const double x = static_cast<double>(i);
            sx += x;
            sy += samples_[i].depth;
            sxx += x * x;
            sxy += x * samples_[i].depth;
        }
        const double denom = n * sxx - sx * sx;
        m.queue_depth_slope = denom != 0 ? (n * sxy - sx * sy) / denom : 0.0;
        if (samples_.size() >= 8) {
            const std::size_t quarter = samples_.size() / 4;
            double first = 0, last = 0;
            for (std::size_t i = 0; i < quarter; ++i) first += samples_[i].depth;
            for (std::size_t i = samples_.size() - quarter; i < samples_.size(); ++i) {
                last += samples_[i].depth;
            }
            first /= static_cast<double>(quarter);
            last /= static_cast<double>(quarter);
            m.unstable = m.queue_depth_slope > 0 && last > 2.0 * first + 2.0;
        }
    } else {
        m.queue_depth_mean = m.queue_depth_max = std::numeric_limits<double>::quiet_NaN();
        m.queue_depth_slope = 0.0;
    }

    m.throttle_beta = throttle_.beta();
    m.prefetch_depth_final = prefetcher_ ? prefetcher_->depth() : 0;
    m.scheme_final = scheme_name(scheme_current_);
}

namespace {

// Single source for both report formats: a flat snake_case object. Rates with
// no observations are null; the CSV renders null as an empty value.
nlohmann::ordered_json metrics_object(const SimMetrics& m) {
    using json = nlohmann::ordered_json;
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json j;
    j["schema"] = "speckv-report v1";
    j["tokens_committed"] = m.tokens_committed;
    j["requests_arrived"] = m.requests_arrived;
    j["requests_admitted"] = m.requests_admitted;
    j["requests_completed"] = m.requests_completed;
    j["final_tick"] = m.final_tick;
    j["sim_seconds"] = num(m.sim_seconds);
    j["throughput_tokens_per_s"] = num(m.throughput_tps);
    j["prefetch_hit_rate"] = num(m.hit_rate);
    j["coverage"] = num(m.coverage);
    j["precision"] = num(m.precision);
    j["avg_token_latency_ms"] = num(m.avg_latency_ms);
    j["p50_token_latency_ms"] = num(m.p50_latency_ms);
    j["p95_token_latency_ms"] = num(m.p95_latency_ms);
    j["p99_token_latency_ms"] = num(m.p99_latency_ms);
    j["avg_ttft_ms"] = num(m.avg_ttft_ms);
    j["effective_access_latency_ns"] = num(m.effective_access_ns);
    j["decode_reads"] = m.decode_reads;
    j["prefetch_hits"] = m.prefetch_hits;
    j["local_hits"] = m.local_hits;
    j["sync_fallbacks"] = m.sync_fallbacks;
    j["prefetches_issued"] = m.prefetches_issued;
    j["prefetches_consumed"] = m.prefetches_consumed;
    j["windows_invalidated"] = m.windows_invalidated;
    j["predictor_calls"] = m.pref.predictions;
    j["predictor_contained"] = m.pref.contained;
    j["prefetch_skipped_resident"] = m.pref.skipped_resident;
    j["prefetch_skipped_unmapped"] = m.pref.skipped_unmapped;
    j["cxl_read_utilization"] = num(m.cxl_read_util);
    j["cxl_write_utilization"] = num(m.cxl_write_util);
    j["fpga_hbm_utilization"] = num(m.fpga_hbm_util);
    j["gpu_hbm_utilization"] = num(m.gpu_hbm_util);
    j["tlb_hit_rate"] = num(m.tlb_hit_rate);
    j["queue_depth_mean"] = num(m.queue_depth_mean);
    j["queue_depth_max"] = num(m.queue_depth_max);
    j["queue_depth_slope"] = num(m.queue_depth_slope);
    j["queue_samples"] = m.queue_series.size();
    j["unstable"] = m.unstable;
    j["throttle_beta"] = num(m.throttle_beta);
    j["prefetch_depth_final"] = m.prefetch_depth_final;
    j["scheme_final"] = m.scheme_final;
    j["l1_hits"] = m.hier.l1_hits;
    j["l1_misses"] = m.hier.l1_misses;
    j["promotions"] = m.hier.promotions;
    j["demotions"] = m.hier.demotions;
    j["writebacks_queued"] = m.hier.writebacks_queued;
    j["writebacks_done"] = m.hier.writebacks_done;
    j["writebacks_coalesced"] = m.hier.writebacks_coalesced;
    j["forced_flushes"] = m.hier.forced_flushes;
    j["staged_entries"] = m.hier.staged;
    j["consumed_entries"] = m.hier.consumed;
    j["invalidated_entries"] = m.hier.invalidated;
    j["aged_out"] = m.hier.aged_out;
    j["half_swaps"] = m.hier.half_swaps;
    j["alloc_failures"] = m.hier.alloc_failures;
    return j;
}

} // namespace

std::string metrics_to_csv(const SimMetrics& m) {
    const auto obj = metrics_object(m);
    std::ostringstream out;
    out << "metric,value\n";
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        out << it.key() << ',';
        const auto& v = it.value();
        if (v.is_null()) {
            // empty cell
        } else if (v.is_string()) {
            out << v.get<std::string>();
        } else {
            out << v.dump();
        }
        out << '\n';
    }
    return out.str();
}

std::string metrics_to_json(const SimMetrics& m) {
    return metrics_object(m).dump(2) + "\n";
}

std::vector<KSweepRow> sweep_k(const SimConfig& base, const std::vector<std::uint32_t>& arms) {
    if (arms.empty()) throw config_error("sweep-k needs at least one arm");
    std::vector<KSweepRow> rows;
    for (std::uint32_t k : arms) {
        SimConfig cfg = base;
        cfg.serving.prefetch_depth = k;
        cfg.adapt_depth = false;
        cfg.adapt_throttle = false;
        SimEngine engine(cfg);
        const SimMetrics& m = engine.run();
        rows.push_back(KSweepRow{k, m.hit_rate, m.precision, m.coverage, m.throughput_tps,
                                 m.avg_latency_ms});
    }
    return rows;
}

std::vector<EngineSweepRow> sweep_engines(std::uint32_t min_engines, std::uint32_t max_engines,
                                          double theta_single_bytes_per_s, double gpu_bw_bytes_per_s,
                                          std::uint64_t entry_bytes, double load_fraction,
                                          double sim_seconds, std::uint64_t seed) {
    if (min_engines < 1 || min_engines > max_engines) {
        throw config_error("engine sweep range must satisfy 1 <= min <= max");
    }
    if (!(theta_single_bytes_per_s > 0) || !(gpu_bw_bytes_per_s > 0) || entry_bytes == 0) {
        throw config_error("engine sweep needs positive rates and entry size");
    }
    if (!(load_fraction > 0 && load_fraction < 1)) {
        throw config_error("engine sweep load fraction must lie in (0, 1)");
    }
    if (!(sim_seconds > 0)) throw config_error("engine sweep duration must be positive");

    std::vector<EngineSweepRow> rows;
    const double s_bytes = static_cast<double>(entry_bytes);
    for (std::uint32_t n = min_engines; n <= max_engines; ++n) {
        const double slowdown = std::max(0.05, 1.0 - kContentionPerEngine * (n - 1));
        const double svc_engine = s_bytes / (theta_single_bytes_per_s * slowdown);
        const double svc_sink = s_bytes / gpu_bw_bytes_per_s;

        // Closed loop: every engine always has the next entry queued.
        std::vector<double> engine_free(n, 0.0);
        double sink_free = 0.0;
        std::uint64_t done_count = 0;
        for (std::uint64_t i = 0;; ++i) {
            const std::uint32_t e = static_cast<std::uint32_t>(i % n);
            if (engine_free[e] >= sim_seconds) break;
            engine_free[e] += svc_engine;
            const double sink_start = std::max(engine_free[e], sink_free);
            sink_free = sink_start + svc_sink;
            done_count++;
        }
        const double thr = static_cast<double>(done_count) * s_bytes / sim_seconds;

        // Open loop at a fraction of the measured capacity.
        Rng rng(seed + n);
        const double lam = load_fraction * thr / s_bytes;
        std::fill(engine_free.begin(), engine_free.end(), 0.0);
        sink_free = 0.0;
        std::vector<double> lat_s;
        double t = 0.0;
        std::uint64_t idx = 0;
        while (true) {
            t += rng.next_exponential(lam);
            if (t >= sim_seconds) break;
            const std::uint32_t e = static_cast<std::uint32_t>(idx++ % n);
            const double start = std::max(t, engine_free[e]);
            engine_free[e] = start + svc_engine;
            const double sink_start = std::max(engine_free[e], sink_free);
            sink_free = sink_start + svc_sink;
            lat_s.push_back(sink_free - t);
        }
        EngineSweepRow row;
        row.engines = n;
        row.throughput_gbps = thr / 1e9;
        row.efficiency = thr / (static_cast<double>(n) * theta_single_bytes_per_s);
        row.avg_latency_ns = mean_of(lat_s) * 1e9;
        row.p99_latency_ns = percentile(lat_s, 0.99) * 1e9;
        rows.push_back(row);
    }
    return rows;
}

} // namespace speckv
