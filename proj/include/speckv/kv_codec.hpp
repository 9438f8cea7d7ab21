#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "speckv/errors.hpp"
#include "speckv/rng.hpp"

namespace speckv {

// A tile of cache values: rows are tokens, cols are channel dims. Values carry
// 16-bit precision semantics, so construction snaps them to the binary16 grid
// and Raw payloads round-trip bit exactly.
struct KvBlock {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<float> values; // rows * cols, row-major

    static KvBlock from_values(std::uint32_t rows, std::uint32_t cols, std::vector<float> vals);

    std::uint64_t element_count() const { return static_cast<std::uint64_t>(rows) * cols; }
    std::uint64_t raw_bytes() const { return element_count() * 2; } // fp16 elements
};

enum class Scheme : std::uint8_t {
    Raw = 0,
    Int8 = 1,
    Int8Delta = 2,
    Int8DeltaRle = 3,
};

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

// Header layout: [scheme:1][rows:4][cols:4][scale:4], little endian.
inline constexpr std::uint64_t kHeaderBytes = 13;

struct CompressedBlock {
    Scheme scheme = Scheme::Raw;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    float scale = 0.0f; // 0 for Raw
    std::vector<std::uint8_t> payload;

    std::uint64_t stored_bytes() const { return kHeaderBytes + payload.size(); }
};

// Symmetric int8 quantization. scale = max|x| / 127 (stored as float32);
// q = round-half-away-from-zero(x / scale), so |x - q*scale| <= scale/2.
// All-zero input keeps scale 0 and quantizes to zeros. Non-finite input throws.
std::pair<float, std::vector<std::int8_t>> quantize(const KvBlock& block);
KvBlock dequantize(float scale, const std::vector<std::int8_t>& q, std::uint32_t rows, std::uint32_t cols);

// Per-row byte deltas: first byte of each row raw, the rest wrapping mod-256
// differences. Exact inverse of delta_decode for any byte content.
std::vector<std::uint8_t> delta_encode(const std::vector<std::uint8_t>& bytes, std::uint32_t rows, std::uint32_t cols);
std::vector<std::uint8_t> delta_decode(const std::vector<std::uint8_t>& bytes, std::uint32_t rows, std::uint32_t cols);

// (value, run_length) pairs, run_length in [1, 255]; longer runs split.
std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& bytes);

// Applies the scheme. If the encoded payload would not be smaller than the Raw
// payload the block is stored as Raw instead; *bypassed reports that early exit.
CompressedBlock compress(const KvBlock& block, Scheme scheme, bool* bypassed = nullptr);

// Total inverse for any well-formed CompressedBlock; corrupt payloads throw
// corrupt_payload. Raw decodes bit-identically; int8 schemes decode to
// dequantize(scale, q) exactly.
KvBlock decompress(const CompressedBlock& cb);

// original bytes / (scheme payload bytes + header bytes), without the bypass
// substitution, so a losing scheme measures below 1.
double measure_ratio(const KvBlock& block, Scheme scheme);

std::vector<std::uint8_t> serialize(const CompressedBlock& cb);
CompressedBlock deserialize(const std::vector<std::uint8_t>& bytes);

// Expected compression ratio per layer. Early layers carry smoother activations
// and compress better than late ones.
struct LayerCompressProfile {
    std::vector<double> ratio; // one entry per layer, each in [1, 8]

    static LayerCompressProfile default_profile(std::uint32_t layers);
    double at(std::uint32_t layer) const; // clamps to the last entry
    double mean() const;
    void validate() const;
};

// Correlated synthetic tile: per-row piecewise-linear walks in the int8 domain
// whose delta stream has mean run length ~= target_ratio, so the full pipeline
// lands near that ratio. target_ratio must be in [1.5, 8].
KvBlock make_correlated_block(Rng& rng, std::uint32_t rows, std::uint32_t cols, double target_ratio);

} // namespace speckv
