#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "speckv/memory_hierarchy.hpp"
#include "speckv/rng.hpp"
#include "speckv/timing_model.hpp"

namespace speckv {

inline constexpr std::uint32_t kPadToken = 0xFFFFFFFFu;

struct PredictorOutput {
    std::vector<std::uint32_t> tokens;     // candidate ids, best first
    std::vector<double> confidence;        // same length, non-increasing
};

// Next-token candidate source. history holds the most recent committed ids,
// oldest first, front-padded with kPadToken when shorter than the configured
// depth. true_next is what the stream will actually emit: statistical
// predictors ignore it, oracle-style predictors use it to realize a
// calibrated accuracy without modeling a live network.
class TokenPredictor {
public:
    virtual ~TokenPredictor() = default;
    virtual PredictorOutput predict(std::span<const std::uint32_t> history, std::uint32_t k,
                                    std::uint32_t true_next) = 0;
    virtual const char* name() const = 0;
};

// Puts the true token at rank 1 with a containment probability calibrated so
// the top-4 rate equals `accuracy`; wider (narrower) candidate sets recover
// more (less) per a fixed diminishing-returns curve.
class OracleNoisyPredictor final : public TokenPredictor {
public:
    OracleNoisyPredictor(double accuracy, std::uint32_t vocab, Rng rng);
    PredictorOutput predict(std::span<const std::uint32_t> history, std::uint32_t k,
                            std::uint32_t true_next) override;
    const char* name() const override { return "oracle"; }

    double containment(std::uint32_t k) const;

private:
    double accuracy_;
    std::uint32_t vocab_;
    Rng rng_;
};

// Count-based Markov predictor with backoff: ranks successors of the longest
// matching context first, then shorter contexts, then unconditional counts.
class MarkovPredictor final : public TokenPredictor {
public:
    MarkovPredictor(std::uint32_t order, std::uint32_t vocab);
    void train(std::span<const std::uint32_t> tokens);
    PredictorOutput predict(std::span<const std::uint32_t> history, std::uint32_t k,
                            std::uint32_t true_next) override;
    const char* name() const override { return "markov"; }

    std::uint64_t trained_tokens() const { return trained_; }

private:
    void rank_from(const std::unordered_map<std::uint32_t, std::uint64_t>& counts,
                   std::vector<std::uint32_t>& out, std::uint32_t k) const;

    std::uint32_t order_;
    std::uint32_t vocab_;
    std::uint64_t trained_ = 0;
    // counts_[n] maps an (n+1)-token context key to successor counts.
    std::vector<std::unordered_map<std::uint64_t, std::unordered_map<std::uint32_t, std::uint64_t>>> counts_;
    std::unordered_map<std::uint32_t, std::uint64_t> unconditional_;
};

// Replays the true next token at rank 1 except for a corrupted fraction of
// predictions, which exclude it entirely.
class ReplayPredictor final : public TokenPredictor {
public:
    ReplayPredictor(double corruption, std::uint32_t vocab, Rng rng);
    PredictorOutput predict(std::span<const std::uint32_t> history, std::uint32_t k,
                            std::uint32_t true_next) override;
    const char* name() const override { return "replay"; }

private:
    double corruption_;
    std::uint32_t vocab_;
    Rng rng_;
};

// Layers staged while layer `layer` of `total` computes: the next two layers
// of the same candidate window. The first layer of the *next* window is
// staged at commit time instead (the wraparound slot of the pipeline).
std::vector<std::uint32_t> pipeline_layers(std::uint32_t layer, std::uint32_t total);

struct PrefetchWindow {
    bool active = false;
    std::uint64_t base_pos = 0;  // position the upcoming decode step serves
    int contained_rank = -1;     // rank of the true token, -1 when absent
    std::uint32_t width = 0;
    std::vector<std::uint32_t> candidate_tokens;
};

struct PrefetchCounters {
    std::uint64_t predictions = 0;
    std::uint64_t contained = 0;
    std::uint64_t issued = 0;
    std::uint64_t skipped_resident = 0;
    std::uint64_t skipped_unmapped = 0;
    std::uint64_t windows_invalidated = 0;
};

// Drives speculative staging: one candidate window per request, entries issued
// over the read link two layers ahead of compute plus the wraparound slot.
class Prefetcher {
public:
    Prefetcher(MemoryHierarchy& mem, LinkChannel& read_link, const LatencyParams& lat,
               std::unique_ptr<TokenPredictor> predictor, std::uint32_t depth,
               std::uint32_t total_layers);

    void set_depth(std::uint32_t d);
    std::uint32_t depth() const { return depth_; }

    // Prediction made when a token commits (or a prefill completes) for the
    // step that will serve next_pos. When has_next is false there is no
    // further step to stage for and the window simply retires.
    void on_commit(std::uint32_t request, std::span<const std::uint32_t> history,
                   std::uint64_t next_pos, std::uint32_t true_next, bool has_next,
                   std::uint64_t now);

    // Stage-ahead while layer `layer` of the current step computes.
    void on_layer_start(std::uint32_t request, std::uint32_t layer, std::uint64_t now);

    const PrefetchWindow* window(std::uint32_t request) const;
    // Wrong-hypothesis cleanup after a missed step: staged entries of the
    // expired window are dropped so they cannot be served later.
    void invalidate_window(std::uint32_t request);
    void drop_request(std::uint32_t request);

    const PrefetchCounters& counters() const { return counters_; }
    TokenPredictor& predictor() { return *predictor_; }

private:
    void issue_entries(std::uint32_t request, std::uint32_t layer, const PrefetchWindow& w,
                       std::uint64_t now);

    MemoryHierarchy& mem_;
    LinkChannel& read_link_;
    const LatencyParams& lat_;
    std::unique_ptr<TokenPredictor> predictor_;
    std::uint32_t depth_;
    std::uint32_t total_layers_;
    std::unordered_map<std::uint32_t, PrefetchWindow> windows_;
    PrefetchCounters counters_;
};

} // namespace speckv
