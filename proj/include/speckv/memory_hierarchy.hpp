#pragma once

#include <cstdint>
#include <deque>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

#include "speckv/errors.hpp"

namespace speckv {

using PageId = std::uint32_t;

enum class Tier : std::uint8_t { L1 = 1, L2 = 2, L3 = 3 };
enum class PageState : std::uint8_t { Clean, Dirty, SpeculativeReadOnly };

const char* tier_name(Tier t);
const char* page_state_name(PageState s);

// One 4KB-granular cache page. The far pool backs every allocated page; tier
// says where the freshest readable copy lives. Dirty pages exist only in L1,
// speculative read-only copies only in L2.
struct KvPage {
    PageId id = 0;
    std::uint32_t request = 0;
    std::uint32_t layer = 0;
    std::uint32_t page_index = 0; // token range [page_index*tpp, (page_index+1)*tpp)
    Tier tier = Tier::L3;
    PageState state = PageState::Clean;
    std::uint32_t access_count = 0;
    std::uint64_t last_access_tick = 0;
    std::uint64_t count_window_start = 0;
    bool writeback_queued = false;
    bool prefetch_touched = false; // a prefetch was ever issued for this page
    // Staging-entry fields, meaningful while tier == L2.
    std::uint64_t entry_ready_tick = 0;
    bool entry_valid = false;
    std::uint8_t entry_half = 0;
    std::uint64_t stored_bytes = 0; // pool reservation after compression
};

// Exact LRU over page ids; list order is the eviction order.
class LruList {
public:
    void touch(PageId id); // insert or move to MRU
    void erase(PageId id);
    bool contains(PageId id) const { return index_.count(id) != 0; }
    std::optional<PageId> lru() const;
    std::size_t size() const { return order_.size(); }
    // LRU -> MRU iteration for maintenance scans.
    const std::list<PageId>& order() const { return order_; }

private:
    std::list<PageId> order_; // front = LRU
    std::unordered_map<PageId, std::list<PageId>::iterator> index_;
};

// Set-associative translation cache with per-set LRU replacement.
class SetAssocTlb {
public:
    SetAssocTlb(std::uint32_t entries, std::uint32_t ways);

    bool access(std::uint64_t key, std::uint64_t stamp); // true on hit; fills on miss
    void invalidate(std::uint64_t key);
    std::uint32_t entries() const { return static_cast<std::uint32_t>(slots_.size()); }
    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }

private:
    struct Slot {
        std::uint64_t key = 0;
        std::uint64_t stamp = 0;
        bool valid = false;
    };
    std::uint32_t ways_;
    std::uint32_t sets_;
    std::vector<Slot> slots_;
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
};

struct HierarchyConfig {
    std::uint64_t page_size = 4096;
    std::uint64_t tokens_per_page = 1;
    std::uint64_t l1_capacity = 1ull << 23;
    std::uint64_t l2_capacity = 1ull << 22;
    std::uint64_t l3_capacity = 1ull << 32;
    std::uint32_t tlb_entries = 64;
    std::uint32_t tlb_ways = 4;
    std::uint32_t tlb_hit_cycles = 1;
    std::uint32_t walk_cycles = 15;
    double t_hot = 4.0;  // promote above this access count
    double t_cold = 1.0; // demote below this access count
    double threshold_step = 0.10;
    double l1_miss_target = 0.06;
    std::uint64_t epoch_ticks = 1024;
};

struct HierarchyCounters {
    std::uint64_t l1_hits = 0;
    std::uint64_t l1_misses = 0;
    std::uint64_t promotions = 0;
    std::uint64_t demotions = 0;
    std::uint64_t writebacks_queued = 0;
    std::uint64_t writebacks_done = 0;
    std::uint64_t writebacks_coalesced = 0;
    std::uint64_t forced_flushes = 0;
    std::uint64_t staged = 0;
    std::uint64_t consumed = 0;
    std::uint64_t invalidated = 0;
    std::uint64_t aged_out = 0;
    std::uint64_t half_swaps = 0;
    std::uint64_t alloc_failures = 0;
};

struct PageTableEntry {
    std::uint32_t request;
    std::uint32_t layer;
    std::uint32_t page_index;
    PageId page;
    Tier tier;
    PageState state;
    std::uint32_t access_count;
};

// Three-tier page store with an address translation unit in front. L1 is a
// fully associative LRU cache, L2 a double-buffered staging area for
// speculative copies, L3 the backing pool that holds pages compressed.
class MemoryHierarchy {
public:
    explicit MemoryHierarchy(const HierarchyConfig& cfg);

    // Called when capacity pressure evicts a still-dirty page: the owner
    // charges the flush transfer before the page may leave L1.
    using FlushHook = void (*)(void* ctx, KvPage& page);
    void set_flush_hook(FlushHook hook, void* ctx) {
        flush_hook_ = hook;
        flush_ctx_ = ctx;
    }

    // Reserves one page; compress_ratio scales its occupancy in the pool.
    // Returns nullopt when the pool is full.
    std::optional<PageId> allocate(std::uint32_t request, std::uint32_t layer, std::uint32_t page_index,
                                   double compress_ratio = 1.0);
    void free_request(std::uint32_t request);

    struct Xlate {
        PageId page;
        std::uint32_t cycles;
        bool tlb_hit;
    };
    std::optional<Xlate> try_translate(std::uint32_t request, std::uint32_t layer, std::uint64_t pos,
                                       std::uint64_t now);
    Xlate translate(std::uint32_t request, std::uint32_t layer, std::uint64_t pos, std::uint64_t now);

    // Table probe with no TLB traffic (bookkeeping paths, not accesses).
    std::optional<PageId> find_page(std::uint32_t request, std::uint32_t layer, std::uint64_t pos) const;

    // Residency probe; an L1 hit refreshes recency and the access counter.
    Tier lookup(PageId id, std::uint64_t now);

    bool exists(PageId id) const { return pages_.count(id) != 0; }
    KvPage& page(PageId id);
    const KvPage& page(PageId id) const;

    // True if the staging buffer holds a valid entry, ready or still in flight.
    bool staged_entry_live(PageId id) const;
    bool staged_entry_ready(PageId id, std::uint64_t now) const;

    bool stage_prefetch(PageId id, std::uint64_t ready_tick); // L3 -> L2 copy
    bool consume_staged(PageId id, std::uint64_t now);        // L2 -> L1 on a hit
    void invalidate_staged(PageId id);                        // lazy: slot stays until overwritten or aged
    void sync_promote(PageId id, std::uint64_t now);          // L3 -> L1 on a demand miss
    void write_new_kv(PageId id, std::uint64_t now);          // -> L1 Dirty, queues a writeback

    std::optional<PageId> pop_writeback();
    void writeback_complete(PageId id, std::uint64_t now);
    bool writeback_pending() const { return !writeback_queue_.empty(); }

    // Threshold-driven placement for one page.
    void migrate(PageId id, std::uint64_t now);
    // Epoch maintenance: demote cold L1 pages, steer thresholds toward the
    // L1 miss-rate target.
    void epoch_scan(std::uint64_t now);

    // Feeds the per-epoch miss rate that epoch_scan steers against.
    void note_l1_access(bool hit);

    const HierarchyCounters& counters() const { return counters_; }
    const HierarchyConfig& config() const { return cfg_; }
    const SetAssocTlb& tlb() const { return tlb_; }
    double t_hot() const { return t_hot_; }
    double t_cold() const { return cfg_.t_cold; }
    std::uint64_t l1_used() const { return l1_used_; }
    std::uint64_t l3_used() const { return l3_used_; }
    std::uint64_t page_count() const { return pages_.size(); }
    const LruList& l1() const { return l1_; }

    std::vector<PageTableEntry> page_table_snapshot() const;

private:
    static std::uint64_t pack_key(std::uint32_t request, std::uint32_t layer, std::uint32_t page_index);
    std::uint32_t effective_count(const KvPage& p, std::uint64_t now) const;
    void bump_count(KvPage& p, std::uint64_t now);
    void insert_l1(KvPage& p, std::uint64_t now);
    void demote_to_l3(KvPage& p);
    void stage_into_half(KvPage& p);
    void swap_halves();

    HierarchyConfig cfg_;
    SetAssocTlb tlb_;
    LruList l1_;
    std::unordered_map<std::uint64_t, PageId> table_;
    std::unordered_map<PageId, KvPage> pages_;
    std::deque<PageId> writeback_queue_;
    std::vector<std::vector<PageId>> half_pages_{2};
    std::uint64_t half_used_[2] = {0, 0};
    std::uint8_t active_half_ = 0;
    std::uint64_t l1_used_ = 0;
    std::uint64_t l3_used_ = 0;
    double t_hot_;
    std::uint64_t epoch_l1_hits_ = 0;
    std::uint64_t epoch_l1_misses_ = 0;
    PageId next_page_ = 1;
    HierarchyCounters counters_;
    FlushHook flush_hook_ = nullptr;
    void* flush_ctx_ = nullptr;
};

} // namespace speckv
