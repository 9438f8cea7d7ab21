#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <speckv/errors.hpp>
#include <speckv/memory_hierarchy.hpp>
#include <speckv/rng.hpp>

#include <algorithm>
#include <set>
#include <vector>

using namespace speckv;

namespace {

HierarchyConfig small_cfg() {
    HierarchyConfig h;
    h.page_size = 4096;
    h.tokens_per_page = 1;
    h.l1_capacity = 4 * 4096;
    h.l2_capacity = 4 * 4096; // two pages per staging half
    h.l3_capacity = 1ull << 30;
    return h;
}

std::set<PageId> l1_set(const MemoryHierarchy& mem) {
    std::set<PageId> s;
    for (const auto& e : mem.page_table_snapshot()) {
        if (e.tier == Tier::L1) s.insert(e.page);
    }
    return s;
}

} // namespace

TEST_CASE("allocation accounting") {
    MemoryHierarchy mem(small_cfg());
    const auto a = mem.allocate(1, 1, 0, 2.0);
    const auto b = mem.allocate(1, 1, 1, 2.0);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(mem.page(*a).stored_bytes == 2048);
    CHECK(mem.l3_used() == 4096);
    CHECK(mem.page_count() == 2);
    CHECK_THROWS_AS(mem.allocate(1, 1, 0, 2.0), config_error); // duplicate triple

    // Ratios below 1 never inflate the stored footprint.
    const auto c = mem.allocate(1, 2, 0, 0.5);
    CHECK(mem.page(*c).stored_bytes == 4096);

    mem.free_request(1);
    CHECK(mem.l3_used() == 0);
    CHECK(mem.page_count() == 0);
}

TEST_CASE("pool exhaustion fails allocation") {
    HierarchyConfig h = small_cfg();
    h.l1_capacity = 2 * 4096;
    h.l3_capacity = 5 * 4096;
    MemoryHierarchy mem(h);
    for (std::uint32_t i = 0; i < 5; ++i) CHECK(mem.allocate(7, 1, i, 1.0).has_value());
    CHECK_FALSE(mem.allocate(7, 1, 5, 1.0).has_value());
    CHECK(mem.counters().alloc_failures == 1);
    mem.free_request(7);
    CHECK(mem.allocate(8, 1, 0, 1.0).has_value());
}

TEST_CASE("translation and position mapping") {
    HierarchyConfig h = small_cfg();
    h.tokens_per_page = 4;
    MemoryHierarchy mem(h);
    const auto p0 = *mem.allocate(3, 2, 0, 1.0);
    const auto p1 = *mem.allocate(3, 2, 1, 1.0);

    CHECK(*mem.find_page(3, 2, 0) == p0);
    CHECK(*mem.find_page(3, 2, 3) == p0);
    CHECK(*mem.find_page(3, 2, 4) == p1);
    CHECK_FALSE(mem.find_page(3, 2, 8).has_value());
    CHECK_FALSE(mem.find_page(3, 9, 0).has_value());

    // Cold translation walks the table, a repeat hits the cache.
    const auto x0 = mem.translate(3, 2, 0, 10);
    CHECK_FALSE(x0.tlb_hit);
    CHECK(x0.cycles == 16);
    CHECK(x0.page == p0);
    const auto x1 = mem.translate(3, 2, 1, 11); // same page
    CHECK(x1.tlb_hit);
    CHECK(x1.cycles == 1);

    CHECK_FALSE(mem.try_translate(3, 2, 8, 12).has_value());
    CHECK_THROWS_AS(mem.translate(3, 2, 8, 13), translation_fault);
}

TEST_CASE("sequential scans keep the translation cache warm") {
    HierarchyConfig h = small_cfg();
    h.tokens_per_page = 16;
    h.l1_capacity = 64 * 4096;
    MemoryHierarchy mem(h);
    for (std::uint32_t i = 0; i < 16; ++i) REQUIRE(mem.allocate(1, 1, i, 1.0).has_value());
    for (std::uint64_t pos = 0; pos < 256; ++pos) (void)mem.translate(1, 1, pos, pos);
    const auto& tlb = mem.tlb();
    CHECK(tlb.hits() == 240);
    CHECK(tlb.misses() == 16);
    const double rate = static_cast<double>(tlb.hits()) / static_cast<double>(tlb.hits() + tlb.misses());
    CHECK(rate == doctest::Approx(0.9375));
    CHECK(rate > 0.92);
}

TEST_CASE("l1 eviction follows true lru order") {
    MemoryHierarchy mem(small_cfg()); // room for 4 pages in L1
    std::vector<PageId> ids;
    for (std::uint32_t i = 0; i < 16; ++i) ids.push_back(*mem.allocate(1, 1, i, 1.0));

    std::vector<PageId> model; // front = MRU
    Rng rng(99);
    for (int step = 0; step < 1000; ++step) {
        const PageId pid = ids[rng.next_below(ids.size())];
        const std::uint64_t tick = static_cast<std::uint64_t>(step);
        if (mem.lookup(pid, tick) == Tier::L1) {
            model.erase(std::find(model.begin(), model.end(), pid));
            model.insert(model.begin(), pid);
        } else {
            mem.sync_promote(pid, tick);
            model.insert(model.begin(), pid);
            if (model.size() > 4) model.pop_back();
        }
        if (step % 50 == 0 || step == 999) {
            CHECK(l1_set(mem) == std::set<PageId>(model.begin(), model.end()));
            REQUIRE(mem.l1().size() == model.size());
            CHECK(*mem.l1().lru() == model.back());
        }
    }
}

TEST_CASE("staging lifecycle") {
    MemoryHierarchy mem(small_cfg());
    std::vector<PageId> ids;
    for (std::uint32_t i = 0; i < 6; ++i) ids.push_back(*mem.allocate(2, 1, i, 1.0));

    CHECK(mem.stage_prefetch(ids[0], 100));
    CHECK(mem.counters().staged == 1);
    CHECK(mem.staged_entry_live(ids[0]));
    CHECK_FALSE(mem.staged_entry_ready(ids[0], 50));
    CHECK(mem.staged_entry_ready(ids[0], 100));
    CHECK(mem.page(ids[0]).prefetch_touched);
    CHECK(mem.page(ids[0]).state == PageState::SpeculativeReadOnly);

    // Consuming moves the copy into L1.
    CHECK(mem.consume_staged(ids[0], 120));
    CHECK(mem.counters().consumed == 1);
    CHECK(mem.lookup(ids[0], 121) == Tier::L1);
    CHECK_FALSE(mem.staged_entry_live(ids[0]));

    // A staged entry for a page already local is refused.
    CHECK_FALSE(mem.stage_prefetch(ids[0], 130));

    // Invalidation keeps the slot occupied but dead until overwritten.
    CHECK(mem.stage_prefetch(ids[1], 140));
    mem.invalidate_staged(ids[1]);
    CHECK(mem.counters().invalidated == 1);
    CHECK_FALSE(mem.staged_entry_live(ids[1]));
    CHECK(mem.stage_prefetch(ids[1], 150)); // re-issue over the dead slot
    CHECK(mem.staged_entry_live(ids[1]));
}

TEST_CASE("staging halves recycle oldest entries") {
    MemoryHierarchy mem(small_cfg()); // 2 pages per half
    std::vector<PageId> ids;
    for (std::uint32_t i = 0; i < 8; ++i) ids.push_back(*mem.allocate(2, 1, i, 1.0));

    CHECK(mem.stage_prefetch(ids[0], 10));
    CHECK(mem.stage_prefetch(ids[1], 10)); // half 0 now full
    CHECK(mem.stage_prefetch(ids[2], 10)); // forces a swap into half 1
    CHECK(mem.counters().half_swaps == 1);
    CHECK(mem.staged_entry_live(ids[0])); // previous half still readable
    CHECK(mem.stage_prefetch(ids[3], 10));
    CHECK(mem.stage_prefetch(ids[4], 10)); // second swap recycles half 0
    CHECK(mem.counters().half_swaps == 2);
    CHECK(mem.counters().aged_out == 2);
    CHECK_FALSE(mem.staged_entry_live(ids[0]));
    CHECK_FALSE(mem.staged_entry_live(ids[1]));
    CHECK(mem.lookup(ids[0], 20) == Tier::L3);
    CHECK(mem.staged_entry_live(ids[2]));
}

TEST_CASE("writeback queue with coalescing") {
    MemoryHierarchy mem(small_cfg());
    const auto a = *mem.allocate(4, 1, 0, 1.0);
    const auto b = *mem.allocate(4, 1, 1, 1.0);

    mem.write_new_kv(a, 10);
    CHECK(mem.page(a).state == PageState::Dirty);
    CHECK(mem.counters().writebacks_queued == 1);
    mem.write_new_kv(a, 11); // append to the same page before the drain
    CHECK(mem.counters().writebacks_queued == 1);
    CHECK(mem.counters().writebacks_coalesced == 1);
    mem.write_new_kv(b, 12);

    const auto first = mem.pop_writeback();
    REQUIRE(first.has_value());
    CHECK(*first == a);
    mem.writeback_complete(*first, 20);
    CHECK(mem.page(a).state == PageState::Clean);
    CHECK(mem.counters().writebacks_done == 1);

    // Freeing the request invalidates the queued record for b.
    mem.free_request(4);
    CHECK_FALSE(mem.pop_writeback().has_value());
}

TEST_CASE("dirty eviction forces a flush") {
    std::vector<PageId> flushed;
    auto hook = [](void* ctx, KvPage& p) { static_cast<std::vector<PageId>*>(ctx)->push_back(p.id); };

    MemoryHierarchy mem(small_cfg()); // 4-page L1
    mem.set_flush_hook(hook, &flushed);
    std::vector<PageId> ids;
    for (std::uint32_t i = 0; i < 5; ++i) ids.push_back(*mem.allocate(5, 1, i, 1.0));
    for (std::uint32_t i = 0; i < 5; ++i) mem.write_new_kv(ids[i], i);

    CHECK(mem.counters().forced_flushes == 1);
    REQUIRE(flushed.size() == 1);
    CHECK(flushed[0] == ids[0]); // the least recently used dirty page
    CHECK(mem.lookup(ids[0], 10) == Tier::L3);
    CHECK(mem.page(ids[0]).state == PageState::Clean);

    // The force-flushed page no longer surfaces from the queue.
    std::set<PageId> drained;
    while (auto pid = mem.pop_writeback()) {
        drained.insert(*pid);
        mem.writeback_complete(*pid, 20);
    }
    CHECK(drained == std::set<PageId>(ids.begin() + 1, ids.end()));
}

TEST_CASE("epoch scan demotes cold pages and steers the threshold") {
    HierarchyConfig h = small_cfg();
    h.epoch_ticks = 1000;
    MemoryHierarchy mem(h);
    const auto a = *mem.allocate(6, 1, 0, 1.0);
    mem.sync_promote(a, 0);
    CHECK(mem.lookup(a, 1) == Tier::L1);

    // Far beyond the hotness window the page counts as cold and is demoted.
    mem.epoch_scan(5000);
    CHECK(mem.page(a).tier == Tier::L3);
    CHECK(mem.counters().demotions >= 1);

    // All-miss epochs lower the promote threshold; all-hit epochs raise it.
    const double t0 = mem.t_hot();
    for (int i = 0; i < 50; ++i) mem.note_l1_access(false);
    mem.epoch_scan(6000);
    CHECK(mem.t_hot() == doctest::Approx(t0 * 0.9));
    for (int i = 0; i < 50; ++i) mem.note_l1_access(true);
    mem.epoch_scan(7000);
    CHECK(mem.t_hot() == doctest::Approx(t0 * 0.9 * 1.1));

    // A page that ran hot while resident keeps its in-window access count
    // across an LRU eviction, so a direct migrate promotes it straight back.
    const auto b = *mem.allocate(6, 2, 0, 1.0);
    mem.sync_promote(b, 7000);
    for (int i = 0; i < 40; ++i) (void)mem.lookup(b, 7001 + i);
    for (std::uint32_t i = 0; i < 4; ++i) { // push b out of the 4-page cache
        mem.sync_promote(*mem.allocate(6, 3, i, 1.0), 7045);
    }
    CHECK(mem.page(b).tier == Tier::L3);
    const auto promos_before = mem.counters().promotions;
    mem.migrate(b, 7050);
    CHECK(mem.page(b).tier == Tier::L1);
    CHECK(mem.counters().promotions == promos_before + 1);
}

TEST_CASE("hierarchy validation") {
    HierarchyConfig h = small_cfg();
    h.page_size = 1000;
    CHECK_THROWS_AS(MemoryHierarchy{h}, config_error);
    h = small_cfg();
    h.tokens_per_page = 0;
    CHECK_THROWS_AS(MemoryHierarchy{h}, config_error);
    h = small_cfg();
    h.l2_capacity = 4096; // less than two pages
    CHECK_THROWS_AS(MemoryHierarchy{h}, config_error);
    h = small_cfg();
    h.t_hot = 1.0;
    h.t_cold = 1.0;
    CHECK_THROWS_AS(MemoryHierarchy{h}, config_error);
    CHECK_THROWS_AS(SetAssocTlb(10, 4), config_error);
}
