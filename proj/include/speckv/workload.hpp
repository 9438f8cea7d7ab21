#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speckv/errors.hpp"
#include "speckv/rng.hpp"

namespace speckv {

inline constexpr std::uint32_t kVocabSize = 1024;

// Serving mix: request shape ranges, arrival rate, and how predictable the
// token stream is (top-4 accuracy of a trained order-2 model).
struct WorkloadProfile {
    std::string name = "chatbot";
    std::uint32_t input_min = 128;
    std::uint32_t input_max = 128;
    std::uint32_t output_min = 256;
    std::uint32_t output_max = 256;
    double lambda_rps = 50.0;
    double accuracy = 0.96;

    static WorkloadProfile preset(const std::string& name);
    void validate() const;
};

struct RequestTrace {
    std::uint64_t arrival_tick = 0;
    std::uint32_t request_id = 0;
    std::uint32_t input_len = 0;
    std::uint32_t output_len = 0;
    std::vector<std::uint32_t> tokens; // input_len + output_len ids
};

// Order-2 Markov source over kVocabSize symbols. Each state (a, b) follows its
// preferred successor with probability exp(-temperature) and teleports
// uniformly otherwise, so a trained order-2 predictor's top-4 accuracy is
// controlled by the temperature alone.
class TokenProcess {
public:
    TokenProcess(double temperature, std::uint64_t seed);

    std::uint32_t next(Rng& rng);
    std::vector<std::uint32_t> generate(std::uint32_t count, Rng& rng);

    // Temperature whose follow-probability yields the requested trained top-4
    // accuracy. accuracy must lie in (4/1024, 1].
    static double calibrate_temperature(double target_top4_accuracy);

    std::uint32_t preferred_successor(std::uint32_t prev2, std::uint32_t prev1) const;

private:
    double follow_p_;
    std::vector<std::uint32_t> perm_;
    std::uint32_t a_ = 0;
    std::uint32_t b_ = 0;
};

// Poisson arrivals over an arrival window; lengths uniform over the profile
// ranges; token ids from a per-request TokenProcess stream.
std::vector<RequestTrace> gen_trace(const WorkloadProfile& profile, double window_s, double f_clk_hz,
                                    std::uint64_t seed);

// Text trace format: header line "speckv-trace v1", then one record per line:
// arrival_tick,request_id,input_len,output_len followed by the token ids,
// whitespace separated. LF line endings.
void write_trace(const std::string& path, const std::vector<RequestTrace>& traces);
std::vector<RequestTrace> read_trace(const std::string& path);

} // namespace speckv
