#ifndef AIRCOMP_PHY_HPP
#define AIRCOMP_PHY_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/common.hpp"
#include "aircomp/likelihood.hpp"

namespace aircomp {

struct FrameConfig {
    int fft_size = 64;           // N_s
    int cp_size = 16;            // N_cp
    int data_subcarriers = 48;
    int data_symbols = 500;
    double bandwidth_hz = 10e6;  // sample rate
    double carrier_hz = 5.85e9;

    void validate() const {
        if (fft_size <= 0 || cp_size <= 0 || data_subcarriers <= 0 || data_symbols <= 0 ||
            bandwidth_hz <= 0 || carrier_hz <= 0)
            throw std::invalid_argument("FrameConfig: all fields must be positive");
        if (data_subcarriers > fft_size)
            throw std::invalid_argument("FrameConfig: data_subcarriers > fft_size");
    }
    size_t positions() const { return size_t(data_symbols) * data_subcarriers; }
};

struct ChannelTap {
    cplx gain;
    int delay = 0;  // samples, must be < cp_size
};

/// One user's multipath taps, time offset and CFO: the source of all phase
/// asynchrony in the model.
struct UserChannel {
    std::vector<ChannelTap> taps{{cplx{1.0, 0.0}, 0}};
    int time_offset = 0;  // samples
    double cfo_hz = 0.0;

    void validate(const FrameConfig& cfg, double max_cfo_hz = 350.0) const {
        if (taps.empty()) throw std::invalid_argument("UserChannel: needs at least one tap");
        for (const auto& t : taps)
            if (t.delay < 0 || t.delay >= cfg.cp_size)
                throw std::invalid_argument("UserChannel: tap delay out of [0, cp_size)");
        if (std::abs(cfo_hz) > max_cfo_hz)
            throw std::invalid_argument("UserChannel: |cfo_hz| exceeds configured limit");
    }
};

/// Complex coefficient per (user, symbol, subcarrier) multiplying that user's
/// frequency-domain BPSK symbol.
struct EffectiveChannelGrid {
    int users = 0;
    int symbols = 0;
    int subcarriers = 0;
    std::vector<cplx> values;  // [user][symbol][subcarrier] row-major

    cplx& at(int u, int i, int k) {
        return values[(size_t(u) * symbols + i) * subcarriers + k];
    }
    cplx at(int u, int i, int k) const {
        return values[(size_t(u) * symbols + i) * subcarriers + k];
    }
    size_t positions() const { return size_t(symbols) * subcarriers; }
    /// Coefficient at flattened position n = i*subcarriers + k.
    cplx at_pos(int u, size_t n) const { return values[size_t(u) * positions() + n]; }
};

struct SuperimposedFrame {
    int symbols = 0;
    int subcarriers = 0;
    std::vector<cplx> samples;  // [symbol][subcarrier] row-major
    double noise_var = 0.0;     // sigma^2 per real dimension; total complex variance 2*sigma^2

    size_t positions() const { return samples.size(); }
};

/// A^u[k] = (sum_l h_l e^{j 2 pi tau_l k / N_s}) * e^{j 2 pi tau^u k / N_s}
inline cplx subcarrier_channel(const UserChannel& ch, int k, const FrameConfig& cfg) {
    const double w = 2.0 * std::numbers::pi * k / cfg.fft_size;
    cplx h{0.0, 0.0};
    for (const auto& t : ch.taps) h += t.gain * std::polar(1.0, w * t.delay);
    return h * std::polar(1.0, w * ch.time_offset);
}

/// A^u[k] * e^{j 2 pi delta_norm i (N_s + N_cp)}, delta_norm = cfo / sample rate.
inline cplx effective_channel(const UserChannel& ch, int i, int k, const FrameConfig& cfg) {
    const double delta_norm = ch.cfo_hz / cfg.bandwidth_hz;
    const double phase = 2.0 * std::numbers::pi * delta_norm * i * (cfg.fft_size + cfg.cp_size);
    return subcarrier_channel(ch, k, cfg) * std::polar(1.0, phase);
}

inline EffectiveChannelGrid build_channel_grid(const std::vector<UserChannel>& channels,
                                               const FrameConfig& cfg) {
    cfg.validate();
    EffectiveChannelGrid g;
    g.users = int(channels.size());
    g.symbols = cfg.data_symbols;
    g.subcarriers = cfg.data_subcarriers;
    g.values.resize(size_t(g.users) * cfg.positions());
    for (int u = 0; u < g.users; ++u)
        for (int i = 0; i < g.symbols; ++i)
            for (int k = 0; k < g.subcarriers; ++k) g.at(u, i, k) = effective_channel(channels[u], i, k, cfg);
    return g;
}

/// "Stale CSI": the symbol-0 coefficients are handed out for every symbol,
/// emulating untracked CFO at the receiver.
inline EffectiveChannelGrid stale_csi(const EffectiveChannelGrid& g) {
    EffectiveChannelGrid s = g;
    for (int u = 0; u < g.users; ++u)
        for (int i = 0; i < g.symbols; ++i)
            for (int k = 0; k < g.subcarriers; ++k) s.at(u, i, k) = g.at(u, 0, k);
    return s;
}

/// BPSK mapping 1 -> +1, 0 -> -1.
inline std::vector<double> modulate_bpsk(const BitBlock& bits) {
    std::vector<double> x(bits.size());
    for (size_t i = 0; i < bits.size(); ++i) x[i] = bits[i] ? 1.0 : -1.0;
    return x;
}

constexpr double kNoiselessSnrDb = std::numeric_limits<double>::infinity();

/// Superimposes BPSK-modulated user bit blocks through an explicit effective
/// channel grid and adds AWGN calibrated against the measured signal power of
/// this frame. snr_db = +inf produces a noiseless frame (noise_var = 0).
inline SuperimposedFrame superimpose_grid(const std::vector<BitBlock>& coded_bits_per_user,
                                          const EffectiveChannelGrid& grid, double snr_db,
                                          uint64_t rng_seed) {
    const int users = grid.users;
    if (int(coded_bits_per_user.size()) != users)
        throw std::invalid_argument("superimpose: user count mismatch");
    const size_t npos = grid.positions();
    for (const auto& b : coded_bits_per_user)
        if (b.size() != npos) throw std::invalid_argument("superimpose: bit block length mismatch");

    SuperimposedFrame f;
    f.symbols = grid.symbols;
    f.subcarriers = grid.subcarriers;
    f.samples.resize(npos);

    double power = 0.0;
    for (size_t n = 0; n < npos; ++n) {
        cplx y{0.0, 0.0};
        for (int u = 0; u < users; ++u) {
            const double x = coded_bits_per_user[u][n] ? 1.0 : -1.0;
            y += grid.at_pos(u, n) * x;
        }
        f.samples[n] = y;
        power += std::norm(y);
    }
    power /= double(npos);

    if (std::isinf(snr_db)) {
        f.noise_var = 0.0;
        return f;
    }
    const double total_noise = power / std::pow(10.0, snr_db / 10.0);  // 2*sigma^2
    f.noise_var = total_noise / 2.0;
    Rng rng(rng_seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(f.noise_var));
    for (auto& y : f.samples) y += cplx{gauss(rng), gauss(rng)};
    return f;
}

inline std::pair<SuperimposedFrame, EffectiveChannelGrid> superimpose(
    const std::vector<BitBlock>& coded_bits_per_user, const std::vector<UserChannel>& channels,
    const FrameConfig& cfg, double snr_db, uint64_t rng_seed) {
    auto grid = build_channel_grid(channels, cfg);
    auto frame = superimpose_grid(coded_bits_per_user, grid, snr_db, rng_seed);
    return {std::move(frame), std::move(grid)};
}

/// Euclidean-distance normalization factor applied before the exponential;
/// the minimum squared distance may be taken globally or per position.
enum class DistanceNorm { None, GlobalMin, PerPositionMin };

struct LikelihoodOptions {
    DistanceNorm norm = DistanceNorm::GlobalMin;
    double norm_floor = 1e-12;
};

inline const char* distance_norm_name(DistanceNorm n) {
    switch (n) {
        case DistanceNorm::None: return "none";
        case DistanceNorm::GlobalMin: return "global-min";
        case DistanceNorm::PerPositionMin: return "per-position-min";
    }
    throw std::invalid_argument("distance_norm_name");
}

inline DistanceNorm distance_norm_from_name(const std::string& s) {
    for (DistanceNorm n : {DistanceNorm::None, DistanceNorm::GlobalMin, DistanceNorm::PerPositionMin})
        if (s == distance_norm_name(n)) return n;
    throw std::invalid_argument("unknown distance norm: " + s);
}

/// Soft joint demodulation: entry(b) = exp(-D_n(b) / (2 sigma^2)) with
/// D_n(b) = |y_n - sum_u g_u (2 b_u - 1)|^2 / alpha. Entries are scaled by a
/// common per-position factor (the minimum-distance term) so that every
/// position keeps at least one strictly positive entry in double precision;
/// all decoders are invariant under per-position positive scaling.
inline LikelihoodGrid soft_joint_likelihoods(const SuperimposedFrame& frame,
                                             const EffectiveChannelGrid& grid,
                                             const LikelihoodOptions& opts = {}) {
    if (frame.symbols != grid.symbols || frame.subcarriers != grid.subcarriers)
        throw std::invalid_argument("soft_joint_likelihoods: dimension mismatch");
    const int users = grid.users;
    const size_t npos = grid.positions();
    const size_t ncomb = size_t{1} << users;

    std::vector<double> dist(npos * ncomb);
    double global_min = std::numeric_limits<double>::infinity();
    std::vector<double> pos_min(npos);
    for (size_t n = 0; n < npos; ++n) {
        double m = std::numeric_limits<double>::infinity();
        for (size_t b = 0; b < ncomb; ++b) {
            cplx s{0.0, 0.0};
            for (int u = 0; u < users; ++u) s += grid.at_pos(u, n) * ((b >> u) & 1 ? 1.0 : -1.0);
            const double d = std::norm(frame.samples[n] - s);
            dist[n * ncomb + b] = d;
            m = std::min(m, d);
        }
        pos_min[n] = m;
        global_min = std::min(global_min, m);
    }

    LikelihoodGrid lh(users, npos);
    if (frame.noise_var == 0.0) {
        // Hard indicator: 1 for the nearest combination(s), 0 otherwise.
        for (size_t n = 0; n < npos; ++n)
            for (size_t b = 0; b < ncomb; ++b)
                lh.at(n)[b] = dist[n * ncomb + b] <= pos_min[n] + 1e-12 ? 1.0 : 0.0;
        return lh;
    }

    double alpha = 1.0;
    if (opts.norm == DistanceNorm::GlobalMin) alpha = std::max(global_min, opts.norm_floor);
    const double two_sigma2 = 2.0 * frame.noise_var;
    for (size_t n = 0; n < npos; ++n) {
        double a = alpha;
        if (opts.norm == DistanceNorm::PerPositionMin) a = std::max(pos_min[n], opts.norm_floor);
        for (size_t b = 0; b < ncomb; ++b) {
            // Clamp the exponent so hopeless combinations keep a strictly
            // positive (if negligible) entry instead of underflowing to zero;
            // downstream -log metrics then stay finite for every path.
            const double e = -(dist[n * ncomb + b] - pos_min[n]) / (a * two_sigma2);
            lh.at(n)[b] = std::exp(std::max(e, -700.0));
        }
    }
    return lh;
}

}  // namespace aircomp

#endif
