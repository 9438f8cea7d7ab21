#include "speckv/model_config.hpp"

#include <string>

namespace speckv {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw overflow_error("kv sizing overflows 64 bits: " + std::to_string(a) + " * " + std::to_string(b));
    }
    return out;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out;
    if (__builtin_add_overflow(a, b, &out)) {
        throw overflow_error("kv sizing sum overflows 64 bits");
    }
    return out;
}

} // namespace

void ModelGeometry::validate() const {
    if (layers < 1) throw config_error("model layers must be >= 1");
    if (hidden_dim == 0 || heads == 0 || hidden_dim % heads != 0) {
        throw config_error("hidden_dim must be a positive multiple of heads");
    }
    if (precision_bits != 8 && precision_bits != 16) {
        throw config_error("precision_bits must be 8 or 16");
    }
    if (max_seq < 1) throw config_error("max_seq must be >= 1");
}

void ServingConfig::validate() const {
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (page_size == 0 || (page_size & (page_size - 1)) != 0) {
        throw config_error("page_size must be a power of two");
    }
    if (l1_capacity >= l3_capacity) throw config_error("l1_capacity must be smaller than l3_capacity");
    if (prefetch_depth < 1) throw config_error("prefetch_depth must be >= 1");
    if (history_len < 1) throw config_error("history_len must be >= 1");
}

std::uint64_t kv_bytes_per_token_layer(const ModelGeometry& g) {
    return checked_mul(2ull, checked_mul(g.hidden_dim, g.precision_bits / 8));
}

std::uint64_t kv_bytes_total(const ModelGeometry& g, std::uint64_t batch, std::uint64_t seq_len) {
    std::uint64_t per_token_layer = kv_bytes_per_token_layer(g);
    return checked_mul(checked_mul(checked_mul(per_token_layer, g.layers), batch), seq_len);
}

std::uint64_t kv_bytes_total(const ModelGeometry& g, std::span<const std::uint32_t> seq_lens) {
    std::uint64_t total = 0;
    for (std::uint32_t len : seq_lens) {
        total = checked_add(total, kv_bytes_total(g, 1, len));
    }
    return total;
}

} // namespace speckv
