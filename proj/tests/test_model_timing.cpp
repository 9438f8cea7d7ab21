#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <speckv/errors.hpp>
#include <speckv/model_config.hpp>
#include <speckv/timing_model.hpp>

#include <array>
#include <cmath>
#include <vector>

using namespace speckv;

namespace {
ModelGeometry geom(std::uint32_t layers, std::uint32_t dim, std::uint32_t heads, std::uint32_t bits,
                   std::uint32_t max_seq) {
    ModelGeometry g;
    g.layers = layers;
    g.hidden_dim = dim;
    g.heads = heads;
    g.precision_bits = bits;
    g.max_seq = max_seq;
    return g;
}
} // namespace

TEST_CASE("kv footprint formulas") {
    CHECK(kv_bytes_total(geom(1, 1, 1, 16, 16), 1, 1) == 4);
    // 2 * 8192 dims * 2 B = 32768 B per token-layer, x80 layers x8 seqs x2048 tokens.
    CHECK(kv_bytes_total(geom(80, 8192, 64, 16, 2048), 8, 2048) == 42949672960ull);
    CHECK(kv_bytes_total(geom(2, 64, 8, 8, 128), 4, 128) == 131072ull);

    // Mixed-length batch equals the sum of singleton batches.
    const auto g = geom(4, 256, 8, 16, 4096);
    std::vector<std::uint32_t> lens{13, 77, 901};
    std::uint64_t manual = 0;
    for (auto s : lens) manual += kv_bytes_total(g, 1, s);
    CHECK(kv_bytes_total(g, {lens.data(), lens.size()}) == manual);

    CHECK(kv_bytes_per_token_layer(geom(80, 8192, 64, 16, 2048)) == 32768ull);
    CHECK(kv_bytes_per_token_layer(geom(2, 64, 8, 8, 128)) == 128ull);
    CHECK(kv_bytes_per_token_layer(geom(1, 1, 1, 16, 16)) == 4ull);

    // Overflow must be detected, not wrapped.
    CHECK_THROWS_AS(kv_bytes_total(geom(4000000, 4000000, 8, 16, 4096), 4000000, 4000000),
                    overflow_error);
}

TEST_CASE("geometry and serving validation") {
    CHECK_THROWS_AS(geom(0, 64, 8, 16, 128).validate(), config_error);
    CHECK_THROWS_AS(geom(2, 0, 1, 16, 128).validate(), config_error);
    CHECK_THROWS_AS(geom(2, 64, 8, 12, 128).validate(), config_error); // only 8/16-bit elements
    CHECK_THROWS_AS(geom(2, 64, 7, 16, 128).validate(), config_error); // heads must divide dim
    CHECK_NOTHROW(geom(2, 64, 8, 8, 128).validate());

    ServingConfig s;
    CHECK_NOTHROW(s.validate());
    s.page_size = 3000; // not a power of two
    CHECK_THROWS_AS(s.validate(), config_error);
    s.page_size = 4096;
    s.prefetch_depth = 0;
    CHECK_THROWS_AS(s.validate(), config_error);
    s.prefetch_depth = 4;
    s.l1_capacity = s.l3_capacity;
    CHECK_THROWS_AS(s.validate(), config_error);
}

TEST_CASE("prefetch pipeline latency") {
    LatencyParams p;
    CHECK(prefetch_latency_cycles(p) == 80);

    // One-shot latency is the sum of the predict, translate, and DMA stages;
    // pipeline depth and initiation interval only shape sustained throughput.
    LatencyParams q = p;
    q.l_pred_cycles = 1;
    q.l_atu_cycles = 1;
    q.l_dma_cycles = 1;
    q.pipeline_depth = 12;
    q.initiation_interval = 1;
    CHECK(prefetch_latency_cycles(q) == 3);

    LatencyParams r = p;
    r.initiation_interval = 5;
    CHECK(prefetch_latency_cycles(r) == 80);
}

TEST_CASE("decompressor effective latency") {
    LatencyParams p;
    CHECK(decomp_effective_latency(p, 0.3) == doctest::Approx(19.0).epsilon(1e-12));
    CHECK(decomp_effective_latency(p, 0.0) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(decomp_effective_latency(p, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK_THROWS_AS(decomp_effective_latency(p, -0.1), config_error);
    CHECK_THROWS_AS(decomp_effective_latency(p, 1.5), config_error);
}

TEST_CASE("translation unit expected latency") {
    LatencyParams p; // l_walk = 15
    CHECK(atu_expected_latency_cycles(p, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(atu_expected_latency_cycles(p, 0.92) == doctest::Approx(2.2).epsilon(1e-12));
    CHECK(atu_expected_latency_cycles(p, 0.0) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("effective access latency blend") {
    LatencyParams p;
    CHECK(effective_access_latency_ns(p, 0.947) == doctest::Approx(367.945).epsilon(1e-9));
    CHECK(effective_access_latency_ns(p, 1.0) == doctest::Approx(285.0).epsilon(1e-12));
    CHECK(effective_access_latency_ns(p, 0.0) == doctest::Approx(1850.0).epsilon(1e-12));
}

TEST_CASE("link entry throughput") {
    LatencyParams p; // 64 GB/s, 4096-byte entries, wire-bound by default
    CHECK(theta_eff_entries_per_s(p) == doctest::Approx(1.5625e7).epsilon(1e-12));

    LatencyParams q = p;
    q.s_entry_bytes = 2048;
    CHECK(theta_eff_entries_per_s(q) == doctest::Approx(3.125e7).epsilon(1e-12));

    // Enormous DMA setup makes the outstanding window the binding constraint:
    // omega_max entries in flight per l_dma interval.
    LatencyParams w = p;
    w.l_dma_cycles = 800000000; // one second of setup at 800 MHz
    CHECK(theta_eff_entries_per_s(w) == doctest::Approx(static_cast<double>(w.omega_max)).epsilon(1e-12));
}

TEST_CASE("prefetch stability criterion") {
    LatencyParams p; // S=4096, bw_cxl=64e9
    CHECK(stability_check(p, 100.0, 4, 0.95));

    // Exact boundary: lambda * k * S == bw * H fails the strict margin.
    const double lam_eq = p.bw_cxl * 1.0 / (4.0 * static_cast<double>(p.s_entry_bytes));
    CHECK_FALSE(stability_check(p, lam_eq, 4, 1.0));

    LatencyParams tiny = p;
    tiny.bw_cxl = 0.001;
    CHECK_FALSE(stability_check(tiny, 1.0, 1, 1.0));
    CHECK_FALSE(stability_check(p, 100.0, 4, 0.0)); // nothing useful ever arrives
}

TEST_CASE("per-layer effective time") {
    // Prefetch issues two layers ahead, so compute only stretches once the
    // prefetch latency exceeds two layer times.
    CHECK(t_effective(10.0, 3.0, 4.0) == doctest::Approx(10.0));
    CHECK(t_effective(10.0, 10.0, 10.0) == doctest::Approx(10.0));
    CHECK(t_effective(10.0, 17.0, 4.0) == doctest::Approx(19.0));
    CHECK(t_effective(10.0, 3.0, 11.0) == doctest::Approx(10.0));
}

TEST_CASE("layer roofline") {
    LatencyParams p;
    const auto g = geom(8, 512, 8, 16, 4096);
    // Weights dominate: 12 * 512^2 * 2 bytes amortized over the batch.
    const double wb = 12.0 * 512 * 512 * 2;
    CHECK(t_layer_roofline_s(g, p, 8) == doctest::Approx(wb / 8 / 1600e9).epsilon(1e-12));
    // Batch 1: still memory-bound, 8x slower.
    CHECK(t_layer_roofline_s(g, p, 1) == doctest::Approx(wb / 1600e9).epsilon(1e-12));

    // Compute-bound corner: throttle the FLOP rate far below the memory system.
    LatencyParams slow = p;
    slow.gpu_peak_flops = 1e9;
    const double flops = 24.0 * 512 * 512;
    CHECK(t_layer_roofline_s(g, slow, 8) == doctest::Approx(flops / 1e9).epsilon(1e-12));
}

TEST_CASE("engine count helpers") {
    CHECK(engines_to_saturate(1600.0, 412.0) == 4);
    CHECK(engines_to_saturate(1600e9, 412e9) == 4);
    CHECK(engines_to_saturate(412.0, 412.0) == 1);
    CHECK(engines_to_saturate(413.0, 412.0) == 2);

    CHECK(engine_headroom({0.305, 0.140, 0.158, 0.259}) == 3);
    CHECK(engine_headroom({0.5}) == 2);
    CHECK(engine_headroom({0.9, 0.2}) == 1);
    CHECK_THROWS_AS(engine_headroom({}), config_error);
    CHECK_THROWS_AS(engine_headroom({1.2}), config_error);
}

TEST_CASE("aggregate throughput with contention") {
    const auto one = aggregate_throughput(1, 412e9, 1600e9);
    CHECK(one.total == doctest::Approx(412e9));
    CHECK(one.efficiency == doctest::Approx(1.0));

    CHECK(aggregate_throughput(2, 412e9, 1600e9).total == doctest::Approx(798e9).epsilon(0.05));
    CHECK(aggregate_throughput(3, 412e9, 1600e9).total == doctest::Approx(1156e9).epsilon(0.05));
    CHECK(aggregate_throughput(4, 412e9, 1600e9).total == doctest::Approx(1487e9).epsilon(0.05));

    const double eff4 = aggregate_throughput(4, 412e9, 1600e9).efficiency;
    CHECK(eff4 > 0.88);
    CHECK(eff4 < 0.93);

    double prev = 0.0;
    for (std::uint32_t n = 1; n <= 16; ++n) {
        const auto row = aggregate_throughput(n, 412e9, 1600e9);
        CHECK(row.total <= 1600e9 + 1e-3);
        CHECK(row.total >= prev - 1e-3); // GPU cap makes it flat, never decreasing
        prev = row.total;
    }
}

TEST_CASE("deficit arbiter fairness") {
    DeficitArbiter arb;
    std::vector<double> q{10.0, 1.0};
    std::vector<double> lat{1.0, 1.0};
    std::array<int, 2> wins{0, 0};
    for (int i = 0; i < 1100; ++i) wins[arb.pick(q, lat, 1.0)]++;
    CHECK(static_cast<double>(wins[0]) / wins[1] == doctest::Approx(10.0).epsilon(0.05));

    DeficitArbiter arb2;
    std::array<int, 2> w2{0, 0};
    for (int i = 0; i < 1000; ++i) w2[arb2.pick({1.0, 1.0}, {2.0, 2.0}, 0.5)]++;
    CHECK(std::abs(w2[0] - w2[1]) <= 1);

    DeficitArbiter bad;
    CHECK_THROWS_AS(bad.pick({}, {}, 0.5), config_error);
    CHECK_THROWS_AS(bad.pick({1.0}, {0.0}, 0.5), config_error);
}

TEST_CASE("link channel serializes the wire") {
    LinkChannel link(64e9, 800e6, 12, 16); // 80 bytes per cycle on the wire

    const auto a = link.issue(0, 8000); // 100 cycles of wire time
    CHECK(a.start == 0);
    CHECK(a.ready == a.start + 100 + 12);

    const auto b = link.issue(0, 8000); // must wait for the first transfer
    CHECK(b.start == 100);
    CHECK(b.ready == 212);
    CHECK_FALSE(link.idle(150));
    CHECK(link.idle(200));
    CHECK(link.total_bytes() == 16000);

    // Later idle-issue starts immediately.
    const auto c = link.issue(1000, 80);
    CHECK(c.start == 1000);
    CHECK(c.ready == 1013);
}

TEST_CASE("tick conversion rounds up") {
    LatencyParams p; // 800 MHz: 1.25 ns per cycle
    CHECK(p.ns_to_ticks(1.25) == 1);
    CHECK(p.ns_to_ticks(1.26) == 2);
    CHECK(p.ns_to_ticks(0.0) == 0);
    CHECK(p.ns_to_cycles(285.0) == doctest::Approx(228.0));
    CHECK(p.cycles_to_ns(228.0) == doctest::Approx(285.0));
}
