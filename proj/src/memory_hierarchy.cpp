#include "speckv/memory_hierarchy.hpp"

#include <algorithm>
#include <cmath>

namespace speckv {

const char* tier_name(Tier t) {
    switch (t) {
        case Tier::L1: return "L1";
        case Tier::L2: return "L2";
        case Tier::L3: return "L3";
    }
    return "?";
}

const char* page_state_name(PageState s) {
    switch (s) {
        case PageState::Clean: return "clean";
        case PageState::Dirty: return "dirty";
        case PageState::SpeculativeReadOnly: return "speculative_ro";
    }
    return "?";
}

void LruList::touch(PageId id) {
    auto it = index_.find(id);
    if (it != index_.end()) {
        order_.splice(order_.end(), order_, it->second);
    } else {
        index_[id] = order_.insert(order_.end(), id);
    }
}

void LruList::erase(PageId id) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    order_.erase(it->second);
    index_.erase(it);
}

std::optional<PageId> LruList::lru() const {
    if (order_.empty()) return std::nullopt;
    return order_.front();
}

SetAssocTlb::SetAssocTlb(std::uint32_t entries, std::uint32_t ways) : ways_(ways) {
    if (ways == 0 || entries == 0 || entries % ways != 0) {
        throw config_error("tlb entries must be a positive multiple of ways");
    }
    sets_ = entries / ways;
    slots_.resize(entries);
}

namespace {
std::uint64_t mix_key(std::uint64_t key) {
    key ^= key >> 33;
    key *= 0xff51afd7ed558ccdull;
    key ^= key >> 33;
    return key;
}
} // namespace

bool SetAssocTlb::access(std::uint64_t key, std::uint64_t stamp) {
    const std::uint32_t set = static_cast<std::uint32_t>(mix_key(key) % sets_);
    Slot* base = slots_.data() + static_cast<std::size_t>(set) * ways_;
    Slot* victim = base;
    for (std::uint32_t w = 0; w < ways_; w++) {
        Slot& s = base[w];
        if (s.valid && s.key == key) {
            s.stamp = stamp;
            hits_++;
            return true;
        }
        if (!s.valid) {
            victim = &s;
        } else if (victim->valid && s.stamp < victim->stamp) {
            victim = &s;
        }
    }
    misses_++;
    victim->key = key;
    victim->stamp = stamp;
    victim->valid = true;
    return false;
}

void SetAssocTlb::invalidate(std::uint64_t key) {
    const std::uint32_t set = static_cast<std::uint32_t>(mix_key(key) % sets_);
    Slot* base = slots_.data() + static_cast<std::size_t>(set) * ways_;
    for (std::uint32_t w = 0; w < ways_; w++) {
        if (base[w].valid && base[w].key == key) base[w].valid = false;
    }
}

MemoryHierarchy::MemoryHierarchy(const HierarchyConfig& cfg)
    : cfg_(cfg), tlb_(cfg.tlb_entries, cfg.tlb_ways), t_hot_(cfg.t_hot) {
    if (cfg.page_size == 0 || (cfg.page_size & (cfg.page_size - 1)) != 0) {
        throw config_error("page_size must be a power of two");
    }
    if (cfg.tokens_per_page == 0) throw config_error("tokens_per_page must be >= 1");
    if (cfg.l1_capacity >= cfg.l3_capacity) throw config_error("l1 must be smaller than l3");
    if (cfg.l2_capacity < 2 * cfg.page_size) throw config_error("l2 must hold at least two pages");
    if (cfg.t_hot <= cfg.t_cold) throw config_error("hot threshold must exceed cold threshold");
}

std::uint64_t MemoryHierarchy::pack_key(std::uint32_t request, std::uint32_t layer, std::uint32_t page_index) {
    return (static_cast<std::uint64_t>(request) << 40) | (static_cast<std::uint64_t>(layer & 0x3ff) << 30) |
           (page_index & 0x3fffffffu);
}

std::optional<PageId> MemoryHierarchy::allocate(std::uint32_t request, std::uint32_t layer,
                                                std::uint32_t page_index, double compress_ratio) {
    if (compress_ratio < 1.0) compress_ratio = 1.0;
    const std::uint64_t key = pack_key(request, layer, page_index);
    if (table_.count(key)) throw config_error("allocate: triple already mapped");
    const std::uint64_t stored = static_cast<std::uint64_t>(
        std::ceil(static_cast<double>(cfg_.page_size) / compress_ratio));
    if (l3_used_ + stored > cfg_.l3_capacity) {
        counters_.alloc_failures++;
        return std::nullopt;
    }
    l3_used_ += stored;
    KvPage p;
    p.id = next_page_++;
    p.request = request;
    p.layer = layer;
    p.page_index = page_index;
    p.stored_bytes = stored;
    table_[key] = p.id;
    pages_[p.id] = p;
    return p.id;
}

void MemoryHierarchy::free_request(std::uint32_t request) {
    std::vector<std::uint64_t> dead_keys;
    for (auto& [key, pid] : table_) {
        if ((key >> 40) == request) dead_keys.push_back(key);
    }
    std::sort(dead_keys.begin(), dead_keys.end());
    for (std::uint64_t key : dead_keys) {
        const PageId pid = table_[key];
        KvPage& p = pages_.at(pid);
        if (p.tier == Tier::L1) {
            l1_.erase(pid);
            l1_used_ -= cfg_.page_size;
        }
        l3_used_ -= p.stored_bytes;
        tlb_.invalidate(key);
        table_.erase(key);
        pages_.erase(pid);
    }
}

std::optional<MemoryHierarchy::Xlate> MemoryHierarchy::try_translate(std::uint32_t request, std::uint32_t layer,
                                                                     std::uint64_t pos, std::uint64_t now) {
    const std::uint32_t page_index = static_cast<std::uint32_t>(pos / cfg_.tokens_per_page);
    const std::uint64_t key = pack_key(request, layer, page_index);
    auto it = table_.find(key);
    if (it == table_.end()) return std::nullopt;
    const bool hit = tlb_.access(key, now);
    Xlate x;
    x.page = it->second;
    x.tlb_hit = hit;
    x.cycles = hit ? cfg_.tlb_hit_cycles : cfg_.tlb_hit_cycles + cfg_.walk_cycles;
    return x;
}

std::optional<PageId> MemoryHierarchy::find_page(std::uint32_t request, std::uint32_t layer,
                                                 std::uint64_t pos) const {
    const std::uint32_t page_index = static_cast<std::uint32_t>(pos / cfg_.tokens_per_page);
    auto it = table_.find(pack_key(request, layer, page_index));
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

MemoryHierarchy::Xlate MemoryHierarchy::translate(std::uint32_t request, std::uint32_t layer, std::uint64_t pos,
                                                  std::uint64_t now) {
    auto x = try_translate(request, layer, pos, now);
    if (!x) throw translation_fault("no mapping for request " + std::to_string(request));
    return *x;
}

KvPage& MemoryHierarchy::page(PageId id) {
    auto it = pages_.find(id);
    if (it == pages_.end()) throw translation_fault("unknown page id " + std::to_string(id));
    return it->second;
}

const KvPage& MemoryHierarchy::page(PageId id) const {
    auto it = pages_.find(id);
    if (it == pages_.end()) throw translation_fault("unknown page id " + std::to_string(id));
    return it->second;
}

std::uint32_t MemoryHierarchy::effective_count(const KvPage& p, std::uint64_t now) const {
    // Hotness looks at the current epoch window only.
    if (now - p.count_window_start > cfg_.epoch_ticks) return 0;
    return p.access_count;
}

void MemoryHierarchy::bump_count(KvPage& p, std::uint64_t now) {
    if (now - p.count_window_start > cfg_.epoch_ticks) {
        p.access_count = 0;
        p.count_window_start = now;
    }
    p.access_count++;
    p.last_access_tick = now;
}

Tier MemoryHierarchy::lookup(PageId id, std::uint64_t now) {
    KvPage& p = page(id);
    if (p.tier == Tier::L1) {
        l1_.touch(id);
        bump_count(p, now);
    }
    return p.tier;
}

bool MemoryHierarchy::staged_entry_live(PageId id) const {
    auto it = pages_.find(id);
    return it != pages_.end() && it->second.tier == Tier::L2 && it->second.entry_valid;
}

bool MemoryHierarchy::staged_entry_ready(PageId id, std::uint64_t now) const {
    auto it = pages_.find(id);
    return it != pages_.end() && it->second.tier == Tier::L2 && it->second.entry_valid &&
           it->second.entry_ready_tick <= now;
}

void MemoryHierarchy::stage_into_half(KvPage& p) {
    if (half_used_[active_half_] + cfg_.page_size > cfg_.l2_capacity / 2) swap_halves();
    p.entry_half = active_half_;
    half_pages_[active_half_].push_back(p.id);
    half_used_[active_half_] += cfg_.page_size;
}

void MemoryHierarchy::swap_halves() {
    // The other half has been readable since it filled; recycling it now ages
    // out whatever is still there.
    active_half_ ^= 1;
    counters_.half_swaps++;
    for (PageId pid : half_pages_[active_half_]) {
        auto it = pages_.find(pid);
        if (it == pages_.end()) continue;
        KvPage& p = it->second;
        if (p.tier != Tier::L2 || p.entry_half != active_half_) continue; // stale record
        counters_.aged_out++;
        demote_to_l3(p);
    }
    half_pages_[active_half_].clear();
    half_used_[active_half_] = 0;
}

bool MemoryHierarchy::stage_prefetch(PageId id, std::uint64_t ready_tick) {
    KvPage& p = page(id);
    p.prefetch_touched = true;
    if (p.tier == Tier::L1) return false;
    if (p.tier == Tier::L2) {
        // Overwrite in place (a re-issue over a lazily invalidated slot).
        p.entry_ready_tick = ready_tick;
        p.entry_valid = true;
        counters_.staged++;
        return true;
    }
    p.tier = Tier::L2;
    p.state = PageState::SpeculativeReadOnly;
    p.entry_ready_tick = ready_tick;
    p.entry_valid = true;
    stage_into_half(p);
    counters_.staged++;
    return true;
}

void MemoryHierarchy::insert_l1(KvPage& p, std::uint64_t now) {
    p.tier = Tier::L1;
    l1_.touch(p.id);
    l1_used_ += cfg_.page_size;
    bump_count(p, now);
    while (l1_used_ > cfg_.l1_capacity) {
        const PageId victim_id = *l1_.lru();
        KvPage& victim = pages_.at(victim_id);
        if (victim.state == PageState::Dirty) {
            // Dirty pages may not leave L1 unwritten: flush on the spot.
            counters_.forced_flushes++;
            if (flush_hook_) flush_hook_(flush_ctx_, victim);
            victim.state = PageState::Clean;
            victim.writeback_queued = false;
            counters_.writebacks_done++;
        }
        l1_.erase(victim_id);
        l1_used_ -= cfg_.page_size;
        victim.tier = Tier::L3;
        counters_.demotions++;
    }
}

void MemoryHierarchy::demote_to_l3(KvPage& p) {
    p.tier = Tier::L3;
    p.state = PageState::Clean;
    p.entry_valid = false;
}

bool MemoryHierarchy::consume_staged(PageId id, std::uint64_t now) {
    KvPage& p = page(id);
    if (p.tier != Tier::L2 || !p.entry_valid || p.entry_ready_tick > now) return false;
    p.entry_valid = false;
    p.state = PageState::Clean;
    counters_.consumed++;
    insert_l1(p, now);
    return true;
}

void MemoryHierarchy::invalidate_staged(PageId id) {
    KvPage& p = page(id);
    if (p.tier == Tier::L2 && p.entry_valid) {
        p.entry_valid = false;
        counters_.invalidated++;
    }
}

void MemoryHierarchy::sync_promote(PageId id, std::uint64_t now) {
    KvPage& p = page(id);
    if (p.tier == Tier::L1) return;
    if (p.tier == Tier::L2) p.entry_valid = false;
    p.state = PageState::Clean;
    insert_l1(p, now);
    counters_.promotions++;
}

void MemoryHierarchy::write_new_kv(PageId id, std::uint64_t now) {
    KvPage& p = page(id);
    if (p.tier == Tier::L2) {
        // The speculative copy is stale the moment the page is written.
        if (p.entry_valid) counters_.invalidated++;
        p.entry_valid = false;
        p.tier = Tier::L3;
    }
    if (p.tier == Tier::L3) {
        insert_l1(p, now);
    } else {
        l1_.touch(id);
        bump_count(p, now);
    }
    p.state = PageState::Dirty;
    if (!p.writeback_queued) {
        p.writeback_queued = true;
        writeback_queue_.push_back(id);
        counters_.writebacks_queued++;
    } else {
        counters_.writebacks_coalesced++;
    }
}

std::optional<PageId> MemoryHierarchy::pop_writeback() {
    while (!writeback_queue_.empty()) {
        const PageId id = writeback_queue_.front();
        writeback_queue_.pop_front();
        auto it = pages_.find(id);
        if (it == pages_.end()) continue;         // request freed before the drain
        if (!it->second.writeback_queued) continue; // already force-flushed
        return id;
    }
    return std::nullopt;
}

void MemoryHierarchy::writeback_complete(PageId id, std::uint64_t now) {
    (void)now;
    auto it = pages_.find(id);
    if (it == pages_.end()) return;
    KvPage& p = it->second;
    p.writeback_queued = false;
    if (p.state == PageState::Dirty) p.state = PageState::Clean;
    counters_.writebacks_done++;
}

void MemoryHierarchy::migrate(PageId id, std::uint64_t now) {
    KvPage& p = page(id);
    const std::uint32_t count = effective_count(p, now);
    if (p.tier == Tier::L3 && count > t_hot_) {
        p.state = PageState::Clean;
        insert_l1(p, now);
        counters_.promotions++;
    } else if (p.tier == Tier::L1 && count < cfg_.t_cold && p.state != PageState::Dirty) {
        // Dirty pages wait for their writeback to drain before demotion.
        l1_.erase(id);
        l1_used_ -= cfg_.page_size;
        p.tier = Tier::L3;
        counters_.demotions++;
    }
}

void MemoryHierarchy::note_l1_access(bool hit) {
    if (hit) {
        counters_.l1_hits++;
        epoch_l1_hits_++;
    } else {
        counters_.l1_misses++;
        epoch_l1_misses_++;
    }
}

void MemoryHierarchy::epoch_scan(std::uint64_t now) {
    // Demote cold pages; scan a snapshot since migrate() edits the list.
    std::vector<PageId> resident(l1_.order().begin(), l1_.order().end());
    for (PageId pid : resident) {
        const KvPage& p = pages_.at(pid);
        if (effective_count(p, now) < cfg_.t_cold) migrate(pid, now);
    }
    // Steer the promote threshold toward the miss-rate target, one
    // multiplicative step per epoch.
    const std::uint64_t total = epoch_l1_hits_ + epoch_l1_misses_;
    if (total > 0) {
        const double miss_rate = static_cast<double>(epoch_l1_misses_) / static_cast<double>(total);
        if (miss_rate > cfg_.l1_miss_target) {
            t_hot_ *= 1.0 - cfg_.threshold_step;
        } else if (miss_rate < cfg_.l1_miss_target) {
            t_hot_ *= 1.0 + cfg_.threshold_step;
        }
        t_hot_ = std::clamp(t_hot_, cfg_.t_cold + 1.0, 1024.0);
    }
    epoch_l1_hits_ = 0;
    epoch_l1_misses_ = 0;
}

std::vector<PageTableEntry> MemoryHierarchy::page_table_snapshot() const {
    std::vector<PageTableEntry> out;
    out.reserve(pages_.size());
    for (const auto& [pid, p] : pages_) {
        out.push_back({p.request, p.layer, p.page_index, pid, p.tier, p.state, p.access_count});
    }
    std::sort(out.begin(), out.end(), [](const PageTableEntry& a, const PageTableEntry& b) {
        return a.page < b.page;
    });
    return out;
}

} // namespace speckv
