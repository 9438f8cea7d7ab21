#pragma once

#include <cstdint>
#include <span>

#include "speckv/errors.hpp"

namespace speckv {

// Transformer shape as far as cache sizing cares: per token and per layer the
// cache holds one K and one V vector of hidden_dim elements.
struct ModelGeometry {
    std::uint32_t layers = 32;
    std::uint32_t hidden_dim = 4096;
    std::uint32_t heads = 32;
    std::uint32_t precision_bits = 16; // 8 or 16
    std::uint32_t max_seq = 4096;

    void validate() const;
};

struct ServingConfig {
    std::uint32_t batch_size = 8;
    // Power of two; the default holds exactly one token-layer K+V slice of
    // the default 4096-dim fp16 geometry.
    std::uint64_t page_size = 16384;
    std::uint64_t l1_capacity = 1ull << 23; // GPU-local tier
    std::uint64_t l2_capacity = 1ull << 22; // prefetch staging buffer
    std::uint64_t l3_capacity = 1ull << 32; // far pool
    std::uint32_t prefetch_depth = 4;       // k
    std::uint32_t history_len = 16;

    void validate() const;
};

// Exact K+V footprint in bytes: 2 * layers * batch * seq * hidden * bytes-per-element.
// Throws overflow_error instead of wrapping.
std::uint64_t kv_bytes_total(const ModelGeometry& g, std::uint64_t batch, std::uint64_t seq_len);

// Batch members may have distinct lengths; total is the sum of per-request footprints.
std::uint64_t kv_bytes_total(const ModelGeometry& g, std::span<const std::uint32_t> seq_lens);

// One token's K+V slice in one layer: 2 * hidden_dim * bytes-per-element.
std::uint64_t kv_bytes_per_token_layer(const ModelGeometry& g);

} // namespace speckv
