#include "speckv/prefetcher.hpp"

#include <algorithm>
#include <cmath>

#include "speckv/errors.hpp"

namespace speckv {

namespace {

// Appends `count` ids distinct from each other, from `exclude`, and from
// anything already in `out`.
void fill_distinct(std::vector<std::uint32_t>& out, std::uint32_t count, std::uint32_t exclude,
                   std::uint32_t vocab, Rng& rng) {
    while (count-- > 0) {
        for (;;) {
            const auto tok = static_cast<std::uint32_t>(rng.next_range(0, vocab - 1));
            if (tok == exclude) continue;
            if (std::find(out.begin(), out.end(), tok) != out.end()) continue;
            out.push_back(tok);
            break;
        }
    }
}

std::vector<double> descending_confidence(double top, std::size_t n) {
    std::vector<double> c(n);
    double v = top;
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = v;
        v *= 0.6;
    }
    return c;
}

} // namespace

OracleNoisyPredictor::OracleNoisyPredictor(double accuracy, std::uint32_t vocab, Rng rng)
    : accuracy_(accuracy), vocab_(vocab), rng_(rng) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw config_error("oracle accuracy must lie in [0, 1]");
    }
    if (vocab < 32) throw config_error("oracle vocab must be at least 32");
}

double OracleNoisyPredictor::containment(std::uint32_t k) const {
    // Miss mass relative to a width-4 set, anchored at powers of two and
    // interpolated in log2(k): narrow sets miss more, wide sets recover part
    // of the residual with diminishing returns.
    static constexpr double kLog2K[5] = {0.0, 1.0, 2.0, 3.0, 4.0};
    static constexpr double kMissRatio[5] = {2.415, 1.453, 1.0, 0.792, 0.679};
    const double kk = std::min<double>(std::max<double>(k, 1u), 16.0);
    const double x = std::log2(kk);
    double ratio = kMissRatio[4];
    for (int i = 0; i < 4; ++i) {
        if (x <= kLog2K[i + 1]) {
            const double t = (x - kLog2K[i]) / (kLog2K[i + 1] - kLog2K[i]);
            ratio = kMissRatio[i] + t * (kMissRatio[i + 1] - kMissRatio[i]);
            break;
        }
    }
    const double p = 1.0 - (1.0 - accuracy_) * ratio;
    return std::min(1.0, std::max(0.0, p));
}

PredictorOutput OracleNoisyPredictor::predict(std::span<const std::uint32_t> /*history*/, std::uint32_t k,
                                              std::uint32_t true_next) {
    if (k == 0) throw config_error("predict: k must be >= 1");
    k = std::min(k, vocab_ / 2);
    const bool contained = rng_.next_bool(containment(k));
    PredictorOutput out;
    out.tokens.reserve(k);
    if (contained) {
        out.tokens.push_back(true_next);
        fill_distinct(out.tokens, k - 1, true_next, vocab_, rng_);
    } else {
        fill_distinct(out.tokens, k, true_next, vocab_, rng_);
    }
    out.confidence = descending_confidence(containment(k), out.tokens.size());
    return out;
}

MarkovPredictor::MarkovPredictor(std::uint32_t order, std::uint32_t vocab) : order_(order), vocab_(vocab) {
    if (order < 1 || order > 4) throw config_error("markov order must lie in [1, 4]");
    if (vocab == 0 || vocab > 65536) throw config_error("markov vocab must lie in [1, 65536]");
    counts_.resize(order);
}

namespace {
std::uint64_t context_key(std::span<const std::uint32_t> tail) {
    std::uint64_t key = 0;
    for (std::uint32_t tok : tail) key = (key << 16) | (tok & 0xffffu);
    return key;
}
} // namespace

void MarkovPredictor::train(std::span<const std::uint32_t> tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        unconditional_[tokens[i]]++;
        for (std::uint32_t n = 1; n <= order_; ++n) {
            if (i < n) continue;
            counts_[n - 1][context_key(tokens.subspan(i - n, n))][tokens[i]]++;
        }
        trained_++;
    }
}

void MarkovPredictor::rank_from(const std::unordered_map<std::uint32_t, std::uint64_t>& counts,
                                std::vector<std::uint32_t>& out, std::uint32_t k) const {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (const auto& [tok, cnt] : ranked) {
        if (out.size() >= k) break;
        if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
    }
}

PredictorOutput MarkovPredictor::predict(std::span<const std::uint32_t> history, std::uint32_t k,
                                         std::uint32_t /*true_next*/) {
    if (k == 0) throw config_error("predict: k must be >= 1");
    PredictorOutput out;
    out.tokens.reserve(k);
    for (std::uint32_t n = std::min<std::uint32_t>(order_, static_cast<std::uint32_t>(history.size()));
         n >= 1 && out.tokens.size() < k; --n) {
        const auto tail = history.subspan(history.size() - n, n);
        if (std::find(tail.begin(), tail.end(), kPadToken) != tail.end()) continue;
        auto ctx = counts_[n - 1].find(context_key(tail));
        if (ctx != counts_[n - 1].end()) rank_from(ctx->second, out.tokens, k);
    }
    if (out.tokens.size() < k) rank_from(unconditional_, out.tokens, k);
    for (std::uint32_t tok = 0; out.tokens.size() < k && tok < vocab_; ++tok) {
        if (std::find(out.tokens.begin(), out.tokens.end(), tok) == out.tokens.end()) {
            out.tokens.push_back(tok);
        }
    }
    out.confidence = descending_confidence(1.0, out.tokens.size());
    return out;
}

ReplayPredictor::ReplayPredictor(double corruption, std::uint32_t vocab, Rng rng)
    : corruption_(corruption), vocab_(vocab), rng_(rng) {
    if (!(corruption >= 0.0 && corruption <= 1.0)) {
        throw config_error("replay corruption must lie in [0, 1]");
    }
    if (vocab < 32) throw config_error("replay vocab must be at least 32");
}

PredictorOutput ReplayPredictor::predict(std::span<const std::uint32_t> /*history*/, std::uint32_t k,
                                         std::uint32_t true_next) {
    if (k == 0) throw config_error("predict: k must be >= 1");
    k = std::min(k, vocab_ / 2);
    const bool corrupted = rng_.next_bool(corruption_);
    PredictorOutput out;
    out.tokens.reserve(k);
    if (!corrupted) {
        out.tokens.push_back(true_next);
        fill_distinct(out.tokens, k - 1, true_next, vocab_, rng_);
    } else {
        fill_distinct(out.tokens, k, true_next, vocab_, rng_);
    }
    out.confidence = descending_confidence(corrupted ? 0.0 : 1.0, out.tokens.size());
    return out;
}

std::vector<std::uint32_t> pipeline_layers(std::uint32_t layer, std::uint32_t total) {
    if (layer < 1 || layer > total) throw config_error("pipeline_layers: layer out of range");
    std::vector<std::uint32_t> out;
    for (std::uint32_t l = layer + 1; l <= std::min(layer + 2, total); ++l) out.push_back(l);
    return out;
}

Prefetcher::Prefetcher(MemoryHierarchy& mem, LinkChannel& read_link, const LatencyParams& lat,
                       std::unique_ptr<TokenPredictor> predictor, std::uint32_t depth,
                       std::uint32_t total_layers)
    : mem_(mem), read_link_(read_link), lat_(lat), predictor_(std::move(predictor)), depth_(depth),
      total_layers_(total_layers) {
    if (!predictor_) throw config_error("prefetcher needs a predictor");
    if (depth_ < 1 || depth_ > 64) throw config_error("prefetch depth must lie in [1, 64]");
    if (total_layers_ < 1) throw config_error("prefetcher needs at least one layer");
}

void Prefetcher::set_depth(std::uint32_t d) {
    if (d < 1 || d > 64) throw config_error("prefetch depth must lie in [1, 64]");
    depth_ = d;
}

void Prefetcher::issue_entries(std::uint32_t request, std::uint32_t layer, const PrefetchWindow& w,
                               std::uint64_t now) {
    for (std::uint32_t i = 0; i < w.width; ++i) {
        const std::uint64_t pos = w.base_pos + i;
        auto x = mem_.try_translate(request, layer, pos, now);
        if (!x) {
            counters_.skipped_unmapped++;
            continue;
        }
        const KvPage& p = mem_.page(x->page);
        if (p.tier == Tier::L1 || mem_.staged_entry_live(x->page)) {
            counters_.skipped_resident++;
            continue;
        }
        const std::uint64_t t0 = now + lat_.l_pred_cycles + x->cycles;
        const auto iss = read_link_.issue(t0, p.stored_bytes);
        const double decomp = p.stored_bytes < mem_.config().page_size
                                  ? decomp_effective_latency(lat_, 0.0)
                                  : static_cast<double>(lat_.l_bypass_cycles);
        const std::uint64_t ready = iss.ready + static_cast<std::uint64_t>(std::ceil(decomp));
        if (mem_.stage_prefetch(x->page, ready)) {
            counters_.issued++;
        } else {
            counters_.skipped_resident++;
        }
    }
}

void Prefetcher::on_commit(std::uint32_t request, std::span<const std::uint32_t> history,
                           std::uint64_t next_pos, std::uint32_t true_next, bool has_next,
                           std::uint64_t now) {
    PrefetchWindow& w = windows_[request];
    if (!has_next) {
        w = PrefetchWindow{};
        return;
    }
    counters_.predictions++;
    PredictorOutput out = predictor_->predict(history, depth_, true_next);
    w.active = true;
    w.base_pos = next_pos;
    w.width = static_cast<std::uint32_t>(out.tokens.size());
    w.candidate_tokens = std::move(out.tokens);
    auto hit = std::find(w.candidate_tokens.begin(), w.candidate_tokens.end(), true_next);
    w.contained_rank =
        hit == w.candidate_tokens.end() ? -1 : static_cast<int>(hit - w.candidate_tokens.begin());
    if (w.contained_rank >= 0) counters_.contained++;
    issue_entries(request, 1, w, now);
}

void Prefetcher::on_layer_start(std::uint32_t request, std::uint32_t layer, std::uint64_t now) {
    auto it = windows_.find(request);
    if (it == windows_.end() || !it->second.active) return;
    for (std::uint32_t lt : pipeline_layers(layer, total_layers_)) {
        issue_entries(request, lt, it->second, now);
    }
}

const PrefetchWindow* Prefetcher::window(std::uint32_t request) const {
    auto it = windows_.find(request);
    return it == windows_.end() ? nullptr : &it->second;
}

void Prefetcher::invalidate_window(std::uint32_t request) {
    auto it = windows_.find(request);
    if (it == windows_.end() || !it->second.active) return;
    const PrefetchWindow& w = it->second;
    for (std::uint32_t layer = 1; layer <= total_layers_; ++layer) {
        for (std::uint32_t i = 0; i < w.width; ++i) {
            auto pid = mem_.find_page(request, layer, w.base_pos + i);
            if (pid && mem_.staged_entry_live(*pid)) mem_.invalidate_staged(*pid);
        }
    }
    it->second.active = false;
    counters_.windows_invalidated++;
}

void Prefetcher::drop_request(std::uint32_t request) { windows_.erase(request); }

} // namespace speckv
