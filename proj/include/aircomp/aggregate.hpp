#ifndef AIRCOMP_AGGREGATE_HPP
#define AIRCOMP_AGGREGATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "aircomp/common.hpp"

namespace aircomp {

/// Uniform quantizer over the shared symmetric range [-range, range] with
/// 2^bits - 1 intervals. The range is common to all users in a round; the
/// bit-level SUM reconstruction requires a common step size.
struct QuantizerConfig {
    int bits = 8;
    double range = 1.0;  // c

    void validate() const {
        if (bits < 1 || bits > 30) throw std::invalid_argument("QuantizerConfig: bits out of range");
        if (!(range > 0)) throw std::invalid_argument("QuantizerConfig: range must be > 0");
    }
    uint32_t max_level() const { return (uint32_t{1} << bits) - 1; }
    double step() const { return 2.0 * range / max_level(); }
    double level_value(double q) const { return -range + step() * q; }
};

struct QuantizedBlock {
    std::vector<uint32_t> q;
    QuantizerConfig cfg;
};

/// Unbiased stochastic (probability) quantization: a value between two levels
/// maps to each neighbor with probability proportional to proximity, so the
/// dequantized expectation equals the clipped input.
inline QuantizedBlock quantize_stochastic(const std::vector<double>& values,
                                          const QuantizerConfig& cfg, uint64_t rng_seed) {
    cfg.validate();
    QuantizedBlock out;
    out.cfg = cfg;
    out.q.resize(values.size());
    Rng rng(rng_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double step = cfg.step();
    for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw std::invalid_argument("quantize: non-finite value");
        const double v = std::clamp(values[i], -cfg.range, cfg.range);
        const double pos = (v + cfg.range) / step;
        double lo = std::floor(pos);
        double frac = pos - lo;
        uint32_t q = uint32_t(lo);
        if (frac > 0 && unif(rng) < frac) ++q;
        out.q[i] = std::min(q, cfg.max_level());
    }
    return out;
}

inline std::vector<double> dequantize(const QuantizedBlock& block) {
    std::vector<double> v(block.q.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = block.cfg.level_value(block.q[i]);
    return v;
}

/// Little-endian bit order per parameter: bit k of the output is the
/// coefficient of 2^k of the parameter's level index.
inline BitBlock pack_bits(const QuantizedBlock& block) {
    BitBlock bits;
    bits.reserve(block.q.size() * block.cfg.bits);
    for (uint32_t q : block.q)
        for (int k = 0; k < block.cfg.bits; ++k) bits.push_back((q >> k) & 1u);
    return bits;
}

inline QuantizedBlock unpack_bits(const BitBlock& bits, const QuantizerConfig& cfg) {
    if (bits.size() % cfg.bits != 0) throw std::invalid_argument("unpack_bits: length not a multiple of bits");
    QuantizedBlock block;
    block.cfg = cfg;
    block.q.resize(bits.size() / cfg.bits);
    for (size_t i = 0; i < block.q.size(); ++i) {
        uint32_t q = 0;
        for (int k = 0; k < cfg.bits; ++k) q |= uint32_t(bits[i * cfg.bits + k]) << k;
        block.q[i] = q;
    }
    return block;
}

struct AverageResult {
    std::vector<double> values;
    size_t clamped = 0;  // level sums above M*(2^B-1), possible only under SUM-bit errors
};

/// Reconstructs the average of M users' values from per-bit sums:
/// sum_u q_u = sum_k s_k 2^k, average = -c + (2c/(2^B-1)) * (sum_u q_u)/M.
inline AverageResult sum_to_average(const SumWord& sum_bits, int users, const QuantizerConfig& cfg) {
    cfg.validate();
    if (users < 1) throw std::invalid_argument("sum_to_average: users < 1");
    if (sum_bits.size() % cfg.bits != 0)
        throw std::invalid_argument("sum_to_average: length not a multiple of bits");
    for (uint8_t s : sum_bits)
        if (s > users) throw std::invalid_argument("sum_to_average: symbol exceeds user count");
    AverageResult out;
    const size_t count = sum_bits.size() / cfg.bits;
    out.values.resize(count);
    const uint64_t qmax = uint64_t(users) * cfg.max_level();
    for (size_t i = 0; i < count; ++i) {
        uint64_t qsum = 0;
        for (int k = 0; k < cfg.bits; ++k) qsum += uint64_t(sum_bits[i * cfg.bits + k]) << k;
        if (qsum > qmax) {
            qsum = qmax;
            ++out.clamped;
        }
        out.values[i] = -cfg.range + cfg.step() * (double(qsum) / users);
    }
    return out;
}

struct Lemma1Terms {
    double j2 = 0.0;  // quantization term
    double k = 0.0;   // transmission-error term
};

/// J^2 = delta^2/(2^B-1)^2 and K = alpha * (4 delta^2 / (d (2^B-1)))^2 * (4^B-1)/3
/// with delta^2 = (d/4) * span^2.
inline Lemma1Terms lemma1_error_terms(const QuantizerConfig& cfg, int d, double alpha,
                                      double range_span) {
    cfg.validate();
    if (alpha < 0 || alpha > 1) throw std::invalid_argument("lemma1: alpha out of [0,1]");
    if (d < 1) throw std::invalid_argument("lemma1: d < 1");
    const double levels = double(cfg.max_level());  // 2^B - 1
    const double delta2 = d / 4.0 * range_span * range_span;
    Lemma1Terms t;
    t.j2 = delta2 / (levels * levels);
    const double geo = (std::pow(4.0, cfg.bits) - 1.0) / 3.0;  // sum_{i=0}^{B-1} 4^i
    const double base = 4.0 * delta2 / (double(d) * levels);
    t.k = alpha * base * base * geo;
    return t;
}

/// Parameter-block binary layout: magic, count, B, c, then packed bits (one
/// byte per bit for simplicity of the documented format).
inline void write_parameter_block(std::ostream& os, const QuantizedBlock& block) {
    os << "ACPB1 " << block.q.size() << " " << block.cfg.bits << " " << block.cfg.range << "\n";
    BitBlock bits = pack_bits(block);
    os.write(reinterpret_cast<const char*>(bits.data()), std::streamsize(bits.size()));
}

inline QuantizedBlock read_parameter_block(std::istream& is) {
    std::string magic;
    size_t count = 0;
    QuantizerConfig cfg;
    is >> magic >> count >> cfg.bits >> cfg.range;
    if (magic != "ACPB1" || !is) throw std::runtime_error("parameter block: bad header");
    is.get();  // newline
    BitBlock bits(count * cfg.bits);
    is.read(reinterpret_cast<char*>(bits.data()), std::streamsize(bits.size()));
    if (!is) throw std::runtime_error("parameter block: truncated payload");
    return unpack_bits(bits, cfg);
}

}  // namespace aircomp

#endif
