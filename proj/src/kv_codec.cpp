#include "speckv/kv_codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "speckv/fp16.hpp"

namespace speckv {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> encode_raw(const KvBlock& block) {
    std::vector<std::uint8_t> out;
    out.reserve(block.raw_bytes());
    for (float v : block.values) {
        const std::uint16_t h = f32_to_f16_bits(v);
        out.push_back(static_cast<std::uint8_t>(h));
        out.push_back(static_cast<std::uint8_t>(h >> 8));
    }
    return out;
}

std::vector<std::uint8_t> to_bytes(const std::vector<std::int8_t>& q) {
    std::vector<std::uint8_t> out(q.size());
    std::memcpy(out.data(), q.data(), q.size());
    return out;
}

std::vector<std::int8_t> to_int8(const std::vector<std::uint8_t>& b) {
    std::vector<std::int8_t> out(b.size());
    std::memcpy(out.data(), b.data(), b.size());
    return out;
}

// Payload for a scheme as specified, before any bypass substitution.
std::vector<std::uint8_t> encode_payload(const KvBlock& block, Scheme scheme, float* scale_out) {
    if (scheme == Scheme::Raw) {
        *scale_out = 0.0f;
        return encode_raw(block);
    }
    auto [scale, q] = quantize(block);
    *scale_out = scale;
    std::vector<std::uint8_t> bytes = to_bytes(q);
    if (scheme == Scheme::Int8) return bytes;
    bytes = delta_encode(bytes, block.rows, block.cols);
    if (scheme == Scheme::Int8Delta) return bytes;
    return rle_encode(bytes);
}

} // namespace

KvBlock KvBlock::from_values(std::uint32_t rows, std::uint32_t cols, std::vector<float> vals) {
    if (rows == 0 || cols == 0) throw config_error("block dimensions must be positive");
    if (vals.size() != static_cast<std::uint64_t>(rows) * cols) {
        throw config_error("block value count does not match rows*cols");
    }
    for (float& v : vals) {
        if (!std::isfinite(v)) throw config_error("block values must be finite");
        v = snap_to_f16(v); // snaps saturate, so the result stays finite
    }
    KvBlock b;
    b.rows = rows;
    b.cols = cols;
    b.values = std::move(vals);
    return b;
}

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::Raw: return "raw";
        case Scheme::Int8: return "int8";
        case Scheme::Int8Delta: return "int8_delta";
        case Scheme::Int8DeltaRle: return "int8_delta_rle";
    }
    return "?";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "raw") return Scheme::Raw;
    if (name == "int8") return Scheme::Int8;
    if (name == "int8_delta") return Scheme::Int8Delta;
    if (name == "int8_delta_rle") return Scheme::Int8DeltaRle;
    throw config_error("unknown scheme: " + name);
}

std::pair<float, std::vector<std::int8_t>> quantize(const KvBlock& block) {
    float max_abs = 0.0f;
    for (float v : block.values) {
        if (!std::isfinite(v)) throw config_error("quantize: non-finite input");
        max_abs = std::max(max_abs, std::fabs(v));
    }
    std::vector<std::int8_t> q(block.values.size(), 0);
    if (max_abs == 0.0f) return {0.0f, std::move(q)};

    const float scale = static_cast<float>(static_cast<double>(max_abs) / 127.0);
    const double inv = static_cast<double>(scale);
    for (std::size_t i = 0; i < block.values.size(); i++) {
        long r = std::lround(static_cast<double>(block.values[i]) / inv); // rounds half away from zero
        r = std::clamp(r, -127l, 127l);
        q[i] = static_cast<std::int8_t>(r);
    }
    return {scale, std::move(q)};
}

KvBlock dequantize(float scale, const std::vector<std::int8_t>& q, std::uint32_t rows, std::uint32_t cols) {
    if (q.size() != static_cast<std::uint64_t>(rows) * cols) {
        throw corrupt_payload("dequantize: element count mismatch");
    }
    KvBlock b;
    b.rows = rows;
    b.cols = cols;
    b.values.resize(q.size());
    for (std::size_t i = 0; i < q.size(); i++) {
        b.values[i] = static_cast<float>(q[i]) * scale;
    }
    return b;
}

std::vector<std::uint8_t> delta_encode(const std::vector<std::uint8_t>& bytes, std::uint32_t rows, std::uint32_t cols) {
    if (bytes.size() != static_cast<std::uint64_t>(rows) * cols) {
        throw corrupt_payload("delta_encode: size is not rows*cols");
    }
    std::vector<std::uint8_t> out(bytes.size());
    for (std::uint32_t r = 0; r < rows; r++) {
        const std::uint64_t base = static_cast<std::uint64_t>(r) * cols;
        out[base] = bytes[base];
        for (std::uint32_t c = 1; c < cols; c++) {
            out[base + c] = static_cast<std::uint8_t>(bytes[base + c] - bytes[base + c - 1]);
        }
    }
    return out;
}

std::vector<std::uint8_t> delta_decode(const std::vector<std::uint8_t>& bytes, std::uint32_t rows, std::uint32_t cols) {
    if (bytes.size() != static_cast<std::uint64_t>(rows) * cols) {
        throw corrupt_payload("delta_decode: size is not rows*cols");
    }
    std::vector<std::uint8_t> out(bytes.size());
    for (std::uint32_t r = 0; r < rows; r++) {
        const std::uint64_t base = static_cast<std::uint64_t>(r) * cols;
        std::uint8_t acc = bytes[base];
        out[base] = acc;
        for (std::uint32_t c = 1; c < cols; c++) {
            acc = static_cast<std::uint8_t>(acc + bytes[base + c]);
            out[base + c] = acc;
        }
    }
    return out;
}

std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& bytes) {
    std::vector<std::uint8_t> out;
    std::size_t i = 0;
    while (i < bytes.size()) {
        const std::uint8_t v = bytes[i];
        std::size_t run = 1;
        while (i + run < bytes.size() && bytes[i + run] == v && run < 255) run++;
        out.push_back(v);
        out.push_back(static_cast<std::uint8_t>(run));
        i += run;
    }
    return out;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 2 != 0) throw corrupt_payload("rle_decode: odd payload length");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < bytes.size(); i += 2) {
        const std::uint8_t v = bytes[i];
        const std::uint8_t run = bytes[i + 1];
        if (run == 0) throw corrupt_payload("rle_decode: zero run length");
        out.insert(out.end(), run, v);
    }
    return out;
}

CompressedBlock compress(const KvBlock& block, Scheme scheme, bool* bypassed) {
    float scale = 0.0f;
    std::vector<std::uint8_t> payload = encode_payload(block, scheme, &scale);
    bool fell_back = false;
    if (scheme != Scheme::Raw && payload.size() >= block.raw_bytes()) {
        payload = encode_raw(block);
        scale = 0.0f;
        scheme = Scheme::Raw;
        fell_back = true;
    }
    if (bypassed) *bypassed = fell_back;
    CompressedBlock cb;
    cb.scheme = scheme;
    cb.rows = block.rows;
    cb.cols = block.cols;
    cb.scale = scale;
    cb.payload = std::move(payload);
    return cb;
}

KvBlock decompress(const CompressedBlock& cb) {
    const std::uint64_t n = static_cast<std::uint64_t>(cb.rows) * cb.cols;
    if (cb.rows == 0 || cb.cols == 0) throw corrupt_payload("decompress: zero dimension");
    if (cb.scheme == Scheme::Raw) {
        if (cb.payload.size() != n * 2) throw corrupt_payload("decompress: raw payload size mismatch");
        KvBlock b;
        b.rows = cb.rows;
        b.cols = cb.cols;
        b.values.resize(n);
        for (std::uint64_t i = 0; i < n; i++) {
            const std::uint16_t h = static_cast<std::uint16_t>(cb.payload[2 * i]) |
                                    (static_cast<std::uint16_t>(cb.payload[2 * i + 1]) << 8);
            b.values[i] = f16_bits_to_f32(h);
        }
        return b;
    }

    std::vector<std::uint8_t> bytes = cb.payload;
    if (cb.scheme == Scheme::Int8DeltaRle) bytes = rle_decode(bytes);
    if (bytes.size() != n) throw corrupt_payload("decompress: decoded size mismatch");
    if (cb.scheme != Scheme::Int8) bytes = delta_decode(bytes, cb.rows, cb.cols);
    return dequantize(cb.scale, to_int8(bytes), cb.rows, cb.cols);
}

double measure_ratio(const KvBlock& block, Scheme scheme) {
    float scale = 0.0f;
    const std::vector<std::uint8_t> payload = encode_payload(block, scheme, &scale);
    return static_cast<double>(block.raw_bytes()) / static_cast<double>(payload.size() + kHeaderBytes);
}

std::vector<std::uint8_t> serialize(const CompressedBlock& cb) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + cb.payload.size());
    out.push_back(static_cast<std::uint8_t>(cb.scheme));
    put_u32(out, cb.rows);
    put_u32(out, cb.cols);
    std::uint32_t scale_bits;
    std::memcpy(&scale_bits, &cb.scale, 4);
    put_u32(out, scale_bits);
    out.insert(out.end(), cb.payload.begin(), cb.payload.end());
    return out;
}

CompressedBlock deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kHeaderBytes) throw corrupt_payload("deserialize: truncated header");
    if (bytes[0] > static_cast<std::uint8_t>(Scheme::Int8DeltaRle)) {
        throw corrupt_payload("deserialize: unknown scheme tag");
    }
    CompressedBlock cb;
    cb.scheme = static_cast<Scheme>(bytes[0]);
    cb.rows = get_u32(bytes.data() + 1);
    cb.cols = get_u32(bytes.data() + 5);
    std::uint32_t scale_bits = get_u32(bytes.data() + 9);
    std::memcpy(&cb.scale, &scale_bits, 4);
    cb.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
    return cb;
}

LayerCompressProfile LayerCompressProfile::default_profile(std::uint32_t layers) {
    // Early third compresses best, late third worst; overall mean ~3.2.
    LayerCompressProfile p;
    p.ratio.resize(std::max(layers, 1u));
    for (std::uint32_t l = 0; l < p.ratio.size(); l++) {
        const double frac = (p.ratio.size() == 1) ? 0.5 : static_cast<double>(l) / (p.ratio.size() - 1);
        if (frac < 1.0 / 3.0) p.ratio[l] = 3.6;
        else if (frac > 2.0 / 3.0) p.ratio[l] = 2.75;
        else p.ratio[l] = 3.25;
    }
    return p;
}

double LayerCompressProfile::at(std::uint32_t layer) const {
    if (ratio.empty()) return 1.0;
    return ratio[std::min<std::size_t>(layer, ratio.size() - 1)];
}

double LayerCompressProfile::mean() const {
    if (ratio.empty()) return 1.0;
    double sum = 0;
    for (double r : ratio) sum += r;
    return sum / static_cast<double>(ratio.size());
}

void LayerCompressProfile::validate() const {
    if (ratio.empty()) throw config_error("compress profile must not be empty");
    for (double r : ratio) {
        if (!(r >= 1.0 && r <= 8.0)) throw config_error("compress profile ratios must lie in [1, 8]");
    }
}

KvBlock make_correlated_block(Rng& rng, std::uint32_t rows, std::uint32_t cols, double target_ratio) {
    if (!(target_ratio >= 1.5 && target_ratio <= 8.0)) {
        throw config_error("target_ratio must lie in [1.5, 8]");
    }
    // Quantized deltas stay constant within a segment, so the pipeline ratio
    // approaches the mean segment length. Segment ends and row-first bytes each
    // burn one extra run; stretch the mean slightly to compensate.
    const double mean_seg = target_ratio * 1.08;
    const double p_end = 1.0 / mean_seg;

    std::vector<float> vals(static_cast<std::uint64_t>(rows) * cols);
    for (std::uint32_t r = 0; r < rows; r++) {
        // Row 0 anchors the block maximum so the scale reproduces the walk exactly.
        int level = (r == 0) ? 127 : static_cast<int>(rng.next_range(0, 180)) - 90;
        int slope = 0;
        bool in_segment = false;
        for (std::uint32_t c = 0; c < cols; c++) {
            vals[static_cast<std::uint64_t>(r) * cols + c] = static_cast<float>(level) / 127.0f;
            if (!in_segment || rng.next_bool(p_end)) {
                int next_slope;
                do {
                    next_slope = static_cast<int>(rng.next_range(0, 6)) - 3; // [-3, 3]
                } while (next_slope == slope);
                slope = next_slope;
                in_segment = true;
            }
            level += slope;
            if (level > 127 || level < -127) {
                slope = -slope;
                level += 2 * slope;
            }
        }
    }
    return KvBlock::from_values(rows, cols, std::move(vals));
}

} // namespace speckv
