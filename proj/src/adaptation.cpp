#include "speckv/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace speckv {

double ThrottleState::update(double link_util) {
    if (link_util < 0 || link_util > 1) throw config_error("link utilization must lie in [0, 1]");
    const double over = std::max(link_util - target_, 0.0);
    beta_ = std::clamp(beta_ * (1.0 - kappa_ * over), beta_min_, 1.0);
    return beta_;
}

double ThrottleState::recover(double link_util) {
    if (link_util < 0 || link_util > 1) throw config_error("link utilization must lie in [0, 1]");
    if (link_util < target_) beta_ = std::min(beta_ + 0.01, 1.0);
    return beta_;
}

std::uint32_t ThrottleState::effective_depth(std::uint32_t k) const {
    const double scaled = std::ceil(beta_ * k - 1e-12);
    return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(scaled));
}

SchemeSelector::SchemeSelector(double w_ratio, double w_quality, double w_latency, double q_min, double step)
    : q_min_(q_min), step_(step) {
    if (w_ratio < 0 || w_quality < 0 || w_latency < 0) throw config_error("selector weights must be nonnegative");
    if (q_min < 0 || q_min > 1) throw config_error("q_min must lie in [0, 1]");
    w_[0] = w_ratio;
    w_[1] = w_quality;
    w_[2] = w_latency;
}

double SchemeSelector::score(const SchemeCandidate& c, double w_ratio, double w_quality, double w_latency) {
    return w_ratio * c.ratio + w_quality * c.quality - w_latency * c.latency_cycles;
}

Scheme SchemeSelector::select(const std::vector<SchemeCandidate>& candidates) const {
    bool found = false;
    Scheme best = Scheme::Raw;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_ratio = -1.0;
    for (const SchemeCandidate& c : candidates) {
        if (c.quality < q_min_) continue;
        const double s = score(c, w_[0], w_[1], w_[2]);
        if (!found || s > best_score || (s == best_score && c.ratio > best_ratio)) {
            found = true;
            best = c.scheme;
            best_score = s;
            best_ratio = c.ratio;
        }
    }
    return found ? best : Scheme::Raw;
}

void SchemeSelector::weight_update(double reward, Rng& rng) {
    if (has_last_) {
        const double delta = reward - last_reward_;
        for (int i = 0; i < 3; i++) {
            w_[i] += step_ * delta * perturb_[i];
            w_[i] = std::max(w_[i], 0.0);
        }
        double sum = w_[0] + w_[1] + w_[2];
        if (sum <= 0) {
            w_[0] = w_[1] = w_[2] = 1.0 / 3.0;
        } else {
            for (double& w : w_) w /= sum;
        }
    }
    last_reward_ = reward;
    has_last_ = true;
    for (int& p : perturb_) p = rng.next_bool(0.5) ? 1 : -1;
}

BanditState::BanditState(std::vector<std::uint32_t> arms, double beta_ucb)
    : arms_(std::move(arms)), beta_ucb_(beta_ucb) {
    if (arms_.empty()) throw config_error("bandit needs at least one arm");
    if (beta_ucb < 0) throw config_error("beta_ucb must be nonnegative");
    means_.assign(arms_.size(), 0.0);
    counts_.assign(arms_.size(), 0);
}

double BanditState::score(std::size_t idx) const {
    if (counts_[idx] == 0) return std::numeric_limits<double>::infinity();
    const double t = static_cast<double>(std::max<std::uint64_t>(total_, 1));
    return means_[idx] + beta_ucb_ * std::sqrt(2.0 * std::log(t) / static_cast<double>(counts_[idx]));
}

std::uint32_t BanditState::select() const {
    std::size_t best = 0;
    double best_score = score(0);
    for (std::size_t i = 1; i < arms_.size(); i++) {
        const double s = score(i);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return arms_[best];
}

void BanditState::update(std::uint32_t arm_value, double reward) {
    for (std::size_t i = 0; i < arms_.size(); i++) {
        if (arms_[i] == arm_value) {
            counts_[i]++;
            total_++;
            means_[i] += (reward - means_[i]) / static_cast<double>(counts_[i]);
            return;
        }
    }
    throw config_error("bandit update for unknown arm");
}

} // namespace speckv
