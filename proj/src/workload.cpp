#include "speckv/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace speckv {

WorkloadProfile WorkloadProfile::preset(const std::string& name) {
    WorkloadProfile p;
    p.name = name;
    if (name == "chatbot") {
        p.input_min = p.input_max = 128;
        p.output_min = p.output_max = 256;
        p.lambda_rps = 50.0;
        p.accuracy = 0.96;
    } else if (name == "summarization") {
        p.input_min = 1024;
        p.input_max = 2048;
        p.output_min = 128;
        p.output_max = 256;
        p.lambda_rps = 10.0;
        p.accuracy = 0.95;
    } else if (name == "codegen") {
        p.input_min = 256;
        p.input_max = 512;
        p.output_min = 512;
        p.output_max = 1024;
        p.lambda_rps = 20.0;
        p.accuracy = 0.94;
    } else if (name == "qa") {
        p.input_min = 64;
        p.input_max = 128;
        p.output_min = 32;
        p.output_max = 64;
        p.lambda_rps = 80.0;
        p.accuracy = 0.95;
    } else {
        throw config_error("unknown workload profile: " + name);
    }
    return p;
}

void WorkloadProfile::validate() const {
    if (input_min == 0 || output_min == 0) {
        throw config_error("workload lengths must be at least 1");
    }
    if (input_min > input_max || output_min > output_max) {
        throw config_error("workload length ranges must have min <= max");
    }
    if (!(lambda_rps >= 5.0 && lambda_rps <= 100.0)) {
        throw config_error("workload lambda_rps must lie in [5, 100]");
    }
    const double floor_acc = 4.0 / static_cast<double>(kVocabSize);
    if (!(accuracy > floor_acc && accuracy <= 1.0)) {
        throw config_error("workload accuracy must lie in (4/vocab, 1]");
    }
}

TokenProcess::TokenProcess(double temperature, std::uint64_t seed) {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw config_error("token process temperature must be finite and >= 0");
    }
    follow_p_ = std::exp(-temperature);
    perm_.resize(kVocabSize);
    std::iota(perm_.begin(), perm_.end(), 0u);
    Rng structure(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::uint32_t i = kVocabSize - 1; i > 0; --i) {
        const std::uint32_t j = static_cast<std::uint32_t>(structure.next_range(0, i));
        std::swap(perm_[i], perm_[j]);
    }
    a_ = perm_[0];
    b_ = perm_[1];
}

std::uint32_t TokenProcess::preferred_successor(std::uint32_t prev2, std::uint32_t prev1) const {
    const std::uint32_t idx = (5u * (prev1 % kVocabSize) + (prev2 % 4u) * 256u) % kVocabSize;
    return perm_[idx];
}

std::uint32_t TokenProcess::next(Rng& rng) {
    std::uint32_t tok;
    if (rng.next_bool(follow_p_)) {
        tok = preferred_successor(a_, b_);
    } else {
        tok = static_cast<std::uint32_t>(rng.next_range(0, kVocabSize - 1));
    }
    a_ = b_;
    b_ = tok;
    return tok;
}

std::vector<std::uint32_t> TokenProcess::generate(std::uint32_t count, Rng& rng) {
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        out.push_back(next(rng));
    }
    return out;
}

double TokenProcess::calibrate_temperature(double target_top4_accuracy) {
    const double floor_acc = 4.0 / static_cast<double>(kVocabSize);
    if (!(target_top4_accuracy > floor_acc && target_top4_accuracy <= 1.0)) {
        throw config_error("target top-4 accuracy must lie in (4/vocab, 1]");
    }
    // A trained order-2 model ranks the preferred successor first; the next
    // token lands in its top 4 when the chain follows (probability q) or when
    // a uniform teleport happens to hit one of the 4 ranked ids.
    const double q = (target_top4_accuracy - floor_acc) / (1.0 - floor_acc);
    return -std::log(q);
}

std::vector<RequestTrace> gen_trace(const WorkloadProfile& profile, double window_s, double f_clk_hz,
                                    std::uint64_t seed) {
    profile.validate();
    if (!(window_s > 0.0) || !(f_clk_hz > 0.0)) {
        throw config_error("trace window and clock must be positive");
    }
    Rng root(seed);
    Rng arrivals = root.fork(1);
    Rng lengths = root.fork(2);
    Rng draws = root.fork(3);
    TokenProcess process(TokenProcess::calibrate_temperature(profile.accuracy), seed);

    std::vector<RequestTrace> out;
    double t = 0.0;
    std::uint32_t id = 0;
    for (;;) {
        t += arrivals.next_exponential(profile.lambda_rps);
        if (t > window_s) {
            break;
        }
        RequestTrace r;
        r.arrival_tick = static_cast<std::uint64_t>(std::llround(t * f_clk_hz));
        r.request_id = id++;
        r.input_len = static_cast<std::uint32_t>(lengths.next_range(profile.input_min, profile.input_max));
        r.output_len = static_cast<std::uint32_t>(lengths.next_range(profile.output_min, profile.output_max));
        r.tokens = process.generate(r.input_len + r.output_len, draws);
        out.push_back(std::move(r));
    }
    return out;
}

void write_trace(const std::string& path, const std::vector<RequestTrace>& traces) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw config_error("cannot open trace file for writing: " + path);
    }
    f << "speckv-trace v1\n";
    for (const auto& r : traces) {
        if (r.tokens.size() != static_cast<std::size_t>(r.input_len) + r.output_len) {
            throw config_error("trace record token count does not match input_len + output_len");
        }
        f << r.arrival_tick << ',' << r.request_id << ',' << r.input_len << ',' << r.output_len;
        for (std::uint32_t tok : r.tokens) {
            f << ' ' << tok;
        }
        f << '\n';
    }
    if (!f) {
        throw config_error("failed while writing trace file: " + path);
    }
}

std::vector<RequestTrace> read_trace(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw config_error("cannot open trace file: " + path);
    }
    std::string line;
    if (!std::getline(f, line) || line != "speckv-trace v1") {
        throw config_error("trace file missing 'speckv-trace v1' header: " + path);
    }
    std::vector<RequestTrace> out;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        RequestTrace r;
        if (!(ss >> r.arrival_tick >> r.request_id >> r.input_len >> r.output_len)) {
            throw config_error("trace parse error at line " + std::to_string(line_no));
        }
        if (r.input_len == 0 || r.output_len == 0) {
            throw config_error("trace record lengths must be positive at line " + std::to_string(line_no));
        }
        const std::size_t want = static_cast<std::size_t>(r.input_len) + r.output_len;
        r.tokens.reserve(want);
        std::uint32_t tok = 0;
        while (ss >> tok) {
            if (tok >= kVocabSize) {
                throw config_error("trace token id out of range at line " + std::to_string(line_no));
            }
            r.tokens.push_back(tok);
        }
        if (r.tokens.size() != want) {
            throw config_error("trace token count mismatch at line " + std::to_string(line_no));
        }
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const RequestTrace& a, const RequestTrace& b) {
        if (a.arrival_tick != b.arrival_tick) {
            return a.arrival_tick < b.arrival_tick;
        }
        return a.request_id < b.request_id;
    });
    return out;
}

} // namespace speckv
