#pragma once

#include <cstdint>
#include <vector>

#include "speckv/errors.hpp"
#include "speckv/kv_codec.hpp"
#include "speckv/rng.hpp"

namespace speckv {

// Multiplicative backoff of the speculation budget when the far link runs hot.
// update() only ever lowers beta; recovery is a separate additive step.
class ThrottleState {
public:
    ThrottleState(double kappa = 0.5, double target_util = 0.72, double beta_min = 0.05)
        : kappa_(kappa), target_(target_util), beta_min_(beta_min) {
        if (kappa < 0) throw config_error("throttle kappa must be nonnegative");
        if (target_util <= 0 || target_util > 1) throw config_error("throttle target must lie in (0, 1]");
        if (beta_min <= 0 || beta_min > 1) throw config_error("beta_min must lie in (0, 1]");
    }

    // beta' = clamp(beta * (1 - kappa * max(util - target, 0))).
    double update(double link_util);
    // Additive +0.01 while utilization sits below target.
    double recover(double link_util);
    // One control interval: backoff then recovery.
    double step(double link_util) {
        update(link_util);
        return recover(link_util);
    }

    double beta() const { return beta_; }
    // Speculation depth under the current budget: ceil(beta * k), at least 1.
    std::uint32_t effective_depth(std::uint32_t k) const;
    double target() const { return target_; }

private:
    double kappa_;
    double target_;
    double beta_min_;
    double beta_ = 1.0;
};

// A candidate scheme with its measured behavior on recent traffic.
struct SchemeCandidate {
    Scheme scheme = Scheme::Raw;
    double ratio = 1.0;         // R_c
    double quality = 1.0;       // 1 - normalized RMS reconstruction error
    double latency_cycles = 5;  // L_comp
};

// Scores J = w_r * ratio + w_q * quality - w_c * latency over candidates that
// meet the quality floor. Ties break toward the higher ratio; when nothing
// qualifies the selector returns Raw.
class SchemeSelector {
public:
    SchemeSelector(double w_ratio = 0.5, double w_quality = 0.4, double w_latency = 0.1,
                   double q_min = 0.98, double step = 0.05);

    Scheme select(const std::vector<SchemeCandidate>& candidates) const;
    static double score(const SchemeCandidate& c, double w_ratio, double w_quality, double w_latency);

    // Simultaneous-perturbation update: weights move along the last perturbation
    // scaled by the reward delta, then clamp to nonnegative and renormalize to
    // sum 1. Call once per adaptation epoch with that epoch's reward.
    void weight_update(double reward, Rng& rng);

    double w_ratio() const { return w_[0]; }
    double w_quality() const { return w_[1]; }
    double w_latency() const { return w_[2]; }
    double q_min() const { return q_min_; }

private:
    double w_[3];
    double q_min_;
    double step_;
    double last_reward_ = 0.0;
    bool has_last_ = false;
    int perturb_[3] = {1, 1, 1};
};

// UCB over a small arm set. score = mean + beta * sqrt(2 ln T / n); unpulled
// arms score infinite and win first.
class BanditState {
public:
    BanditState(std::vector<std::uint32_t> arms, double beta_ucb = 1.0);

    std::uint32_t select() const; // returns the arm value, ties to the lowest arm
    void update(std::uint32_t arm_value, double reward);

    double score(std::size_t idx) const;
    std::uint64_t pulls(std::size_t idx) const { return counts_[idx]; }
    std::uint64_t total_pulls() const { return total_; }
    const std::vector<std::uint32_t>& arms() const { return arms_; }

private:
    std::vector<std::uint32_t> arms_;
    std::vector<double> means_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
    double beta_ucb_;
};

// Prefetch depth chooser: UCB over {1, 2, 4, 8, 16} on a throughput reward.
class DepthController {
public:
    explicit DepthController(double beta_ucb = 1.0)
        : bandit_({1, 2, 4, 8, 16}, beta_ucb), current_(4) {}

    std::uint32_t depth() const { return current_; }
    void report(double reward) { bandit_.update(current_, reward); }
    std::uint32_t adapt() {
        current_ = bandit_.select();
        return current_;
    }
    const BanditState& bandit() const { return bandit_; }

private:
    BanditState bandit_;
    std::uint32_t current_;
};

} // namespace speckv
